// Exercises the shared library strictly through the public C surface.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ltew/ltew.h"

namespace {

struct Handles {
    // tiny helpers so failures free nothing twice
    static void write_text(const std::string& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        REQUIRE(out.good());
        out << text;
    }

    static std::string slurp(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        REQUIRE(in.good());
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

// 8-bit-exact test pattern so a PPM round trip is lossless.
ltew_image* make_pattern(int w, int h, unsigned seed_byte) {
    ltew_image* img = nullptr;
    REQUIRE(ltew_image_create(w, h, &img) == LTEW_OK);
    float* px = ltew_image_pixels(img);
    const int n = w * h * 3;
    for (int i = 0; i < n; ++i)
        px[i] = static_cast<float>((static_cast<unsigned>(i) * 37u + seed_byte) % 256u) / 255.0f;
    return img;
}

// One-time tiny training run shared by the model-dependent cases.
const std::string& trained_weights_path() {
    static std::string path = [] {
        std::filesystem::create_directories("capi_data");
        ltew_image* img = make_pattern(20, 20, 5);
        REQUIRE(ltew_image_save(img, "capi_data/img0.ppm") == LTEW_OK);
        ltew_image_free(img);
        Handles::write_text("capi_train.cfg",
                            "dataset = capi_data\n"
                            "regime = axis-scale\n"
                            "epochs = 2\n"
                            "batch_size = 1\n"
                            "queries = 8\n"
                            "crop_w = 12\n"
                            "crop_h = 12\n"
                            "scale_min = 1\n"
                            "scale_max = 1\n"
                            "lr = 1e-3\n"
                            "lr_decay_epochs =\n"
                            "model_channels = 4\n"
                            "model_freqs = 2\n"
                            "model_hidden = 8\n"
                            "seed = 11\n");
        REQUIRE(ltew_train("capi_train.cfg", "capi_model.ltew", "capi_trace.csv") == LTEW_OK);
        return std::string("capi_model.ltew");
    }();
    return path;
}

}  // namespace

TEST_CASE("version and initial error state") {
    CHECK(std::string(ltew_version()) == "1.0.0");
    CHECK(ltew_last_error() != nullptr);
}

TEST_CASE("image create, edit, save, reload") {
    ltew_image* img = make_pattern(8, 6, 0);
    CHECK(ltew_image_width(img) == 8);
    CHECK(ltew_image_height(img) == 6);
    const unsigned char* mask = ltew_image_mask(img);
    for (int i = 0; i < 48; ++i) CHECK(mask[i] == 255);

    REQUIRE(ltew_image_save(img, "t_capi_img.ppm") == LTEW_OK);
    ltew_image* back = nullptr;
    REQUIRE(ltew_image_load("t_capi_img.ppm", &back) == LTEW_OK);
    REQUIRE(ltew_image_width(back) == 8);
    REQUIRE(ltew_image_height(back) == 6);
    CHECK(std::memcmp(ltew_image_pixels(back), ltew_image_pixels(img),
                      sizeof(float) * 8 * 6 * 3) == 0);
    ltew_image_free(back);
    ltew_image_free(img);
}

TEST_CASE("argument and io failures set status and message") {
    ltew_image* img = nullptr;
    CHECK(ltew_image_create(0, 5, &img) == LTEW_E_INVALID_ARGUMENT);
    CHECK(ltew_image_create(4, 4, nullptr) == LTEW_E_INVALID_ARGUMENT);
    CHECK(ltew_image_load("no_such_image.ppm", &img) == LTEW_E_IO);
    CHECK(std::string(ltew_last_error()).find("no_such_image.ppm") != std::string::npos);
    CHECK(ltew_image_load(nullptr, &img) == LTEW_E_INVALID_ARGUMENT);

    ltew_transform* t = nullptr;
    CHECK(ltew_transform_parse_text("wobble 1 2", 8, 8, &t) == LTEW_E_FORMAT);
    CHECK(ltew_transform_parse_file("no_such.tf", 8, 8, &t) == LTEW_E_IO);

    Handles::write_text("t_capi_garbage.ltew", "not a weight file at all");
    ltew_model* m = nullptr;
    CHECK(ltew_model_load("t_capi_garbage.ltew", &m) == LTEW_E_FORMAT);
}

TEST_CASE("transform sizes flow through parse and override") {
    ltew_transform* t = nullptr;
    REQUIRE(ltew_transform_parse_text("scale 2 2", 8, 6, &t) == LTEW_OK);
    CHECK(ltew_transform_out_w(t) == 16);
    CHECK(ltew_transform_out_h(t) == 12);
    REQUIRE(ltew_transform_set_out_size(t, 20, 14) == LTEW_OK);
    CHECK(ltew_transform_out_w(t) == 20);
    CHECK(ltew_transform_out_h(t) == 14);
    CHECK(ltew_transform_set_out_size(t, 0, 5) == LTEW_E_INVALID_ARGUMENT);
    ltew_transform_free(t);
}

TEST_CASE("classical warp through the c api matches the identity") {
    ltew_image* img = make_pattern(12, 9, 3);
    ltew_transform* t = nullptr;
    REQUIRE(ltew_transform_parse_text("scale 1 1", 12, 9, &t) == LTEW_OK);

    ltew_image* out = nullptr;
    REQUIRE(ltew_warp(nullptr, img, t, LTEW_METHOD_BILINEAR, nullptr, &out) == LTEW_OK);
    REQUIRE(ltew_image_width(out) == 12);
    REQUIRE(ltew_image_height(out) == 9);
    CHECK(std::memcmp(ltew_image_pixels(out), ltew_image_pixels(img),
                      sizeof(float) * 12 * 9 * 3) == 0);

    // identical images: psnr is +inf over every pixel
    double db = 0.0;
    long long px = 0;
    REQUIRE(ltew_psnr(img, out, 0, &db, &px) == LTEW_OK);
    CHECK(std::isinf(db));
    CHECK(px == 12 * 9);

    ltew_image_free(out);
    ltew_transform_free(t);
    ltew_image_free(img);
}

TEST_CASE("model method requires a model") {
    ltew_image* img = make_pattern(8, 8, 1);
    ltew_transform* t = nullptr;
    REQUIRE(ltew_transform_parse_text("scale 1 1", 8, 8, &t) == LTEW_OK);
    ltew_image* out = nullptr;
    CHECK(ltew_warp(nullptr, img, t, LTEW_METHOD_MODEL, nullptr, &out) ==
          LTEW_E_INVALID_ARGUMENT);
    ltew_transform_free(t);
    ltew_image_free(img);
}

TEST_CASE("training produces loadable weights and a trace") {
    const std::string& wpath = trained_weights_path();
    ltew_model* m = nullptr;
    REQUIRE(ltew_model_load(wpath.c_str(), &m) == LTEW_OK);
    ltew_model_free(m);

    const std::string trace = Handles::slurp("capi_trace.csv");
    CHECK(trace.rfind("step,lr,loss\n", 0) == 0);
    CHECK(trace.find("\n1,") != std::string::npos);
}

TEST_CASE("model warp is chunk-invariant across the c api") {
    ltew_model* m = nullptr;
    REQUIRE(ltew_model_load(trained_weights_path().c_str(), &m) == LTEW_OK);
    ltew_image* img = make_pattern(16, 16, 9);
    ltew_transform* t = nullptr;
    REQUIRE(ltew_transform_parse_text("scale 2 2", 16, 16, &t) == LTEW_OK);

    ltew_image* a = nullptr;
    REQUIRE(ltew_warp(m, img, t, LTEW_METHOD_MODEL, nullptr, &a) == LTEW_OK);
    ltew_warp_options opt{};
    opt.chunk = 7;
    opt.workers = 2;
    ltew_image* b = nullptr;
    REQUIRE(ltew_warp(m, img, t, LTEW_METHOD_MODEL, &opt, &b) == LTEW_OK);

    REQUIRE(ltew_image_width(a) == 32);
    CHECK(std::memcmp(ltew_image_pixels(a), ltew_image_pixels(b),
                      sizeof(float) * 32 * 32 * 3) == 0);
    CHECK(std::memcmp(ltew_image_mask(a), ltew_image_mask(b), 32 * 32) == 0);

    // identity transform keeps every pixel valid
    const unsigned char* mask = ltew_image_mask(a);
    bool all_valid = true;
    for (int i = 0; i < 32 * 32; ++i) all_valid = all_valid && mask[i] == 255;
    CHECK(all_valid);

    float lo = 1e9f, hi = -1e9f;
    const float* px = ltew_image_pixels(a);
    for (int i = 0; i < 32 * 32 * 3; ++i) {
        lo = std::min(lo, px[i]);
        hi = std::max(hi, px[i]);
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);

    ltew_image_free(a);
    ltew_image_free(b);
    ltew_transform_free(t);
    ltew_image_free(img);
    ltew_model_free(m);
}

TEST_CASE("masks flow through save, reload and psnr") {
    ltew_image* gt = make_pattern(10, 10, 2);
    ltew_image* pred = make_pattern(10, 10, 2);

    // knock out one row via a mask round trip
    ltew_image* tmp = nullptr;
    REQUIRE(ltew_image_create(10, 10, &tmp) == LTEW_OK);
    float* px = ltew_image_pixels(tmp);
    for (int i = 0; i < 300; ++i) px[i] = (i < 30) ? 0.0f : 1.0f;
    REQUIRE(ltew_image_save(tmp, "t_capi_maskimg.pgm") != LTEW_OK);  // pgm is mask-only
    REQUIRE(ltew_image_save_mask(tmp, "t_capi_mask_full.pgm") == LTEW_OK);

    // handcraft a half-valid mask file: reuse image save path via pgm mask
    ltew_image_free(tmp);

    // simpler: build the mask from a warp that leaves pixels invalid
    ltew_transform* t = nullptr;
    REQUIRE(ltew_transform_parse_text("homography 1 0 5 0 1 0 0 0 1", 10, 10, &t) == LTEW_OK);
    ltew_image* shifted = nullptr;
    REQUIRE(ltew_warp(nullptr, gt, t, LTEW_METHOD_BILINEAR, nullptr, &shifted) == LTEW_OK);
    REQUIRE(ltew_image_save_mask(shifted, "t_capi_mask.pgm") == LTEW_OK);

    long long full_px = 0, masked_px = 0;
    double db = 0.0;
    REQUIRE(ltew_psnr(gt, pred, 1, &db, &full_px) == LTEW_OK);
    REQUIRE(ltew_image_set_mask_from_file(pred, "t_capi_mask.pgm") == LTEW_OK);
    REQUIRE(ltew_psnr(gt, pred, 1, &db, &masked_px) == LTEW_OK);
    CHECK(full_px == 100);
    CHECK(masked_px < 100);
    CHECK(masked_px > 0);

    ltew_image_free(shifted);
    ltew_transform_free(t);
    ltew_image_free(pred);
    ltew_image_free(gt);
}

TEST_CASE("known psnr value through the c api") {
    ltew_image* a = nullptr;
    ltew_image* b = nullptr;
    REQUIRE(ltew_image_create(4, 4, &a) == LTEW_OK);
    REQUIRE(ltew_image_create(4, 4, &b) == LTEW_OK);
    float* pa = ltew_image_pixels(a);
    float* pb = ltew_image_pixels(b);
    for (int i = 0; i < 48; ++i) {
        pa[i] = 0.5f;
        pb[i] = 0.25f;
    }
    double db = 0.0;
    REQUIRE(ltew_psnr(a, b, 0, &db, nullptr) == LTEW_OK);
    CHECK(db == doctest::Approx(10.0 * std::log10(1.0 / 0.0625)).epsilon(1e-9));
    ltew_image_free(b);
    ltew_image_free(a);
}

TEST_CASE("gradient suite and report buffer through the c api") {
    char small[128];
    REQUIRE(ltew_grad_check(5, small, sizeof small) == LTEW_OK);
    CHECK(small[127] == '\0');
    CHECK(std::strlen(small) > 0);
    CHECK(std::strlen(small) < sizeof small);

    std::vector<char> big(1 << 16);
    REQUIRE(ltew_grad_check(5, big.data(), big.size()) == LTEW_OK);
    CHECK(std::string(big.data()).find("all 92 gradient checks passed") != std::string::npos);
}

TEST_CASE("frequency dump csv through the c api") {
    ltew_model* m = nullptr;
    REQUIRE(ltew_model_load(trained_weights_path().c_str(), &m) == LTEW_OK);
    ltew_image* img = make_pattern(8, 8, 7);
    REQUIRE(ltew_freq_dump(m, img, "t_capi_freq.csv") == LTEW_OK);

    const std::string csv = Handles::slurp("t_capi_freq.csv");
    CHECK(csv.rfind("cx,cy,fx,fy,magnitude\n", 0) == 0);
    const size_t rows = static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(rows == 1 + 8 * 8 * 2);  // header + cells x freqs (D=2 model)

    ltew_image_free(img);
    ltew_model_free(m);
}
