// Command-line front end. Talks to the engine strictly through the public C
// API in ltew/ltew.h.

#include <cmath>
#include <cstdio>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ltew/ltew.h"

namespace {

using ImagePtr = std::unique_ptr<ltew_image, decltype(&ltew_image_free)>;
using TransformPtr = std::unique_ptr<ltew_transform, decltype(&ltew_transform_free)>;
using ModelPtr = std::unique_ptr<ltew_model, decltype(&ltew_model_free)>;

[[noreturn]] void die(const std::string& context) {
    std::fprintf(stderr, "error: %s: %s\n", context.c_str(), ltew_last_error());
    std::exit(1);
}

ImagePtr load_image_or_die(const std::string& path) {
    ltew_image* img = nullptr;
    if (ltew_image_load(path.c_str(), &img) != LTEW_OK) die("loading '" + path + "'");
    return ImagePtr(img, &ltew_image_free);
}

ModelPtr load_model_or_die(const std::string& path) {
    ltew_model* m = nullptr;
    if (ltew_model_load(path.c_str(), &m) != LTEW_OK) die("loading weights '" + path + "'");
    return ModelPtr(m, &ltew_model_free);
}

std::string format_db(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

int run_warp(const std::string& input, const std::string& transform, const std::string& weights,
             const std::string& out, const std::string& method, const std::string& out_size,
             int chunk, int workers, bool clamp_shape, double shape_floor,
             const std::string& mask_out) {
    const ImagePtr img = load_image_or_die(input);

    ltew_transform* traw = nullptr;
    if (ltew_transform_parse_file(transform.c_str(), ltew_image_width(img.get()),
                                  ltew_image_height(img.get()), &traw) != LTEW_OK)
        die("parsing transform '" + transform + "'");
    const TransformPtr t(traw, &ltew_transform_free);

    if (!out_size.empty()) {
        int w = 0, h = 0;
        if (std::sscanf(out_size.c_str(), "%dx%d", &w, &h) != 2) {
            std::fprintf(stderr, "error: --out-size wants WxH, got '%s'\n", out_size.c_str());
            return 1;
        }
        if (ltew_transform_set_out_size(t.get(), w, h) != LTEW_OK) die("setting output size");
    }

    ltew_method m = LTEW_METHOD_MODEL;
    if (method == "bilinear") m = LTEW_METHOD_BILINEAR;
    else if (method == "bicubic") m = LTEW_METHOD_BICUBIC;

    ModelPtr model(nullptr, &ltew_model_free);
    if (m == LTEW_METHOD_MODEL) {
        if (weights.empty()) {
            std::fprintf(stderr, "error: the ltew method needs --weights\n");
            return 1;
        }
        model = load_model_or_die(weights);
    }

    ltew_warp_options opt{};
    opt.chunk = chunk;
    opt.workers = workers;
    opt.clamp_shape = clamp_shape ? 1 : 0;
    opt.shape_floor = shape_floor;

    ltew_image* res_raw = nullptr;
    if (ltew_warp(model.get(), img.get(), t.get(), m, &opt, &res_raw) != LTEW_OK) die("warping");
    const ImagePtr res(res_raw, &ltew_image_free);

    if (ltew_image_save(res.get(), out.c_str()) != LTEW_OK) die("saving '" + out + "'");
    if (!mask_out.empty() && ltew_image_save_mask(res.get(), mask_out.c_str()) != LTEW_OK)
        die("saving mask '" + mask_out + "'");
    return 0;
}

int run_eval(const std::string& gt, const std::string& pred, const std::string& mask,
             const std::string& report) {
    const ImagePtr a = load_image_or_die(gt);
    const ImagePtr b = load_image_or_die(pred);
    if (!mask.empty() && ltew_image_set_mask_from_file(b.get(), mask.c_str()) != LTEW_OK)
        die("loading mask '" + mask + "'");

    double plain = 0.0, masked = 0.0;
    long long plain_px = 0, masked_px = 0;
    if (ltew_psnr(a.get(), b.get(), 0, &plain, &plain_px) != LTEW_OK) die("psnr");
    if (ltew_psnr(a.get(), b.get(), 1, &masked, &masked_px) != LTEW_OK) die("masked psnr");

    std::FILE* fp = std::fopen(report.c_str(), "wb");
    if (!fp) {
        std::fprintf(stderr, "error: cannot write '%s'\n", report.c_str());
        return 1;
    }
    std::fputs("image,metric,value,valid_px\n", fp);
    std::fprintf(fp, "%s,psnr,%s,%lld\n", pred.c_str(), format_db(plain).c_str(), plain_px);
    std::fprintf(fp, "%s,mpsnr,%s,%lld\n", pred.c_str(), format_db(masked).c_str(), masked_px);
    std::fclose(fp);

    std::printf("psnr %s (%lld px), mpsnr %s (%lld px)\n", format_db(plain).c_str(), plain_px,
                format_db(masked).c_str(), masked_px);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ltew: continuous image warping with a learned local Fourier representation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ltew_version());

    // warp
    auto* warp = app.add_subcommand("warp", "resample an image through a transform");
    std::string w_input, w_transform, w_weights, w_out, w_mask_out, w_out_size;
    std::string w_method = "ltew";
    int w_chunk = 0, w_workers = 0;
    bool w_clamp = false;
    double w_floor = 0.0;
    warp->add_option("--input", w_input, "input image (png/ppm)")->required();
    warp->add_option("--transform", w_transform, "transform spec file")->required();
    warp->add_option("--weights", w_weights, "model weight file (ltew method)");
    warp->add_option("--out", w_out, "output image path")->required();
    warp->add_option("--method", w_method, "ltew|bilinear|bicubic (default ltew)")
        ->check(CLI::IsMember({"ltew", "bilinear", "bicubic"}));
    warp->add_option("--chunk", w_chunk, "queries per evaluation chunk");
    warp->add_option("--workers", w_workers, "worker threads (result-invariant)");
    warp->add_option("--out-size", w_out_size, "override output size as WxH");
    warp->add_flag("--clamp-shape", w_clamp, "raise |Jacobian| entries to the trained floor");
    warp->add_option("--shape-floor", w_floor, "floor used by --clamp-shape (default 0.35)");
    warp->add_option("--mask-out", w_mask_out, "also write the validity mask image");

    // train
    auto* train = app.add_subcommand("train", "fit model weights from a config file");
    std::string t_config, t_weights, t_trace;
    train->add_option("--config", t_config, "key=value training config")->required();
    train->add_option("--out-weights", t_weights, "where to write the weights")->required();
    train->add_option("--trace", t_trace, "optional step,lr,loss CSV");

    // eval
    auto* eval = app.add_subcommand("eval", "PSNR report between two images");
    std::string e_gt, e_pred, e_mask, e_report;
    eval->add_option("--gt", e_gt, "reference image")->required();
    eval->add_option("--pred", e_pred, "image under test")->required();
    eval->add_option("--mask", e_mask, "extra validity mask image");
    eval->add_option("--report", e_report, "output CSV path")->required();

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
    unsigned long long g_seed = 0;
    bool g_have_seed = false;
    gc->add_option("--seed", g_seed, "suite seed (default: random)")->trigger_on_parse();
    gc->callback([&] { g_have_seed = gc->count("--seed") > 0; });

    // freq-dump
    auto* fd = app.add_subcommand("freq-dump", "per-cell Fourier content as CSV");
    std::string f_input, f_weights, f_out;
    fd->add_option("--input", f_input, "input image")->required();
    fd->add_option("--weights", f_weights, "model weight file")->required();
    fd->add_option("--out", f_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    if (warp->parsed())
        return run_warp(w_input, w_transform, w_weights, w_out, w_method, w_out_size, w_chunk,
                        w_workers, w_clamp, w_floor, w_mask_out);

    if (train->parsed()) {
        if (ltew_train(t_config.c_str(), t_weights.c_str(),
                       t_trace.empty() ? nullptr : t_trace.c_str()) != LTEW_OK)
            die("training");
        std::printf("weights written to %s\n", t_weights.c_str());
        return 0;
    }

    if (eval->parsed()) return run_eval(e_gt, e_pred, e_mask, e_report);

    if (gc->parsed()) {
        if (!g_have_seed) g_seed = std::random_device{}();
        std::vector<char> report(1 << 16);
        const ltew_status s = ltew_grad_check(g_seed, report.data(), report.size());
        std::fputs(report.data(), stdout);
        if (s != LTEW_OK) {
            std::fprintf(stderr, "error: %s (seed %llu)\n", ltew_last_error(), g_seed);
            return 1;
        }
        return 0;
    }

    if (fd->parsed()) {
        const ImagePtr img = load_image_or_die(f_input);
        const ModelPtr model = load_model_or_die(f_weights);
        if (ltew_freq_dump(model.get(), img.get(), f_out.c_str()) != LTEW_OK) die("freq dump");
        return 0;
    }

    return 0;
}
