// Drives the installed CLI binary (path in $LTEW_CLI) end to end, using the
// C API only to prepare fixtures and inspect results.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ltew/ltew.h"

namespace {

std::string cli() {
    const char* p = std::getenv("LTEW_CLI");
    REQUIRE_MESSAGE(p != nullptr, "LTEW_CLI must point at the cli binary (ctest sets it)");
    return p;
}

// exit code of `cmd`, with stdout/stderr captured to files
int run(const std::string& args) {
    const std::string cmd = cli() + " " + args + " > t_cli_out.txt 2> t_cli_err.txt";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

void make_fixture_image(const std::string& path, int w, int h, unsigned salt) {
    ltew_image* img = nullptr;
    REQUIRE(ltew_image_create(w, h, &img) == LTEW_OK);
    float* px = ltew_image_pixels(img);
    for (int i = 0; i < w * h * 3; ++i)
        px[i] = static_cast<float>((static_cast<unsigned>(i) * 53u + salt) % 256u) / 255.0f;
    REQUIRE(ltew_image_save(img, path.c_str()) == LTEW_OK);
    ltew_image_free(img);
}

// weights trained once by the cli itself, reused by later cases
const std::string& cli_weights() {
    static std::string path = [] {
        std::filesystem::create_directories("cli_data");
        make_fixture_image("cli_data/a.ppm", 24, 24, 1);
        make_fixture_image("cli_data/b.ppm", 24, 24, 2);
        write_text("cli_train.cfg",
                   "dataset = cli_data\n"
                   "regime = axis-scale\n"
                   "epochs = 2\n"
                   "batch_size = 1\n"
                   "queries = 8\n"
                   "crop_w = 12\n"
                   "crop_h = 12\n"
                   "scale_min = 0.5\n"
                   "scale_max = 1\n"
                   "lr = 1e-3\n"
                   "lr_decay_epochs =\n"
                   "model_channels = 4\n"
                   "model_freqs = 2\n"
                   "model_hidden = 8\n"
                   "seed = 3\n");
        REQUIRE(run("train --config cli_train.cfg --out-weights cli_model.ltew "
                    "--trace cli_trace.csv") == 0);
        return std::string("cli_model.ltew");
    }();
    return path;
}

}  // namespace

TEST_CASE("usage errors exit nonzero, help exits zero") {
    CHECK(run("") != 0);
    CHECK(run("--help") == 0);
    CHECK(run("warp") != 0);  // missing required options
    CHECK(run("frobnicate") != 0);
}

TEST_CASE("classical warp from the command line") {
    make_fixture_image("t_cli_in.ppm", 16, 16, 7);
    write_text("t_cli_scale.tf", "scale 2 2\n");
    REQUIRE(run("warp --input t_cli_in.ppm --transform t_cli_scale.tf --out t_cli_up.ppm "
                "--method bilinear") == 0);

    ltew_image* out = nullptr;
    REQUIRE(ltew_image_load("t_cli_up.ppm", &out) == LTEW_OK);
    CHECK(ltew_image_width(out) == 32);
    CHECK(ltew_image_height(out) == 32);
    ltew_image_free(out);
}

TEST_CASE("ltew method needs weights") {
    make_fixture_image("t_cli_in2.ppm", 8, 8, 9);
    write_text("t_cli_id.tf", "scale 1 1\n");
    CHECK(run("warp --input t_cli_in2.ppm --transform t_cli_id.tf --out t_cli_o.ppm") != 0);
    CHECK(slurp("t_cli_err.txt").find("--weights") != std::string::npos);
}

TEST_CASE("train then model warp with mask and out-size override") {
    const std::string w = cli_weights();
    CHECK(slurp("cli_trace.csv").rfind("step,lr,loss\n", 0) == 0);

    make_fixture_image("t_cli_in3.ppm", 16, 16, 4);
    write_text("t_cli_scale15.tf", "scale 1.5 1.5\n");
    REQUIRE(run("warp --input t_cli_in3.ppm --transform t_cli_scale15.tf --weights " + w +
                " --out t_cli_warped.png --mask-out t_cli_warped_mask.pgm --chunk 64 "
                "--workers 2 --out-size 20x20") == 0);

    ltew_image* out = nullptr;
    REQUIRE(ltew_image_load("t_cli_warped.png", &out) == LTEW_OK);
    CHECK(ltew_image_width(out) == 20);
    CHECK(ltew_image_height(out) == 20);
    REQUIRE(ltew_image_set_mask_from_file(out, "t_cli_warped_mask.pgm") == LTEW_OK);
    ltew_image_free(out);

    // shape clamping is accepted and produces an image too
    REQUIRE(run("warp --input t_cli_in3.ppm --transform t_cli_scale15.tf --weights " + w +
                " --out t_cli_clamped.png --clamp-shape --shape-floor 0.4") == 0);
}

TEST_CASE("eval writes the psnr report csv") {
    make_fixture_image("t_cli_gt.ppm", 12, 12, 3);
    make_fixture_image("t_cli_pred.ppm", 12, 12, 8);
    REQUIRE(run("eval --gt t_cli_gt.ppm --pred t_cli_pred.ppm --report t_cli_report.csv") == 0);

    const std::string csv = slurp("t_cli_report.csv");
    CHECK(csv.rfind("image,metric,value,valid_px\n", 0) == 0);
    CHECK(csv.find(",psnr,") != std::string::npos);
    CHECK(csv.find(",mpsnr,") != std::string::npos);
    CHECK(csv.find("t_cli_pred.ppm") != std::string::npos);

    // identical pair renders inf
    REQUIRE(run("eval --gt t_cli_gt.ppm --pred t_cli_gt.ppm --report t_cli_report2.csv") == 0);
    CHECK(slurp("t_cli_report2.csv").find(",psnr,inf,") != std::string::npos);
}

TEST_CASE("grad-check subcommand") {
    REQUIRE(run("grad-check --seed 3") == 0);
    CHECK(slurp("t_cli_out.txt").find("gradient checks passed") != std::string::npos);
    // fresh random seed must pass too
    REQUIRE(run("grad-check") == 0);
}

TEST_CASE("freq-dump subcommand") {
    const std::string w = cli_weights();
    make_fixture_image("t_cli_fd.ppm", 6, 6, 2);
    REQUIRE(run("freq-dump --input t_cli_fd.ppm --weights " + w + " --out t_cli_freq.csv") == 0);
    CHECK(slurp("t_cli_freq.csv").rfind("cx,cy,fx,fy,magnitude\n", 0) == 0);
}

TEST_CASE("broken inputs surface as errors on stderr") {
    write_text("t_cli_bad.tf", "perspective 1 2 3\n");
    make_fixture_image("t_cli_in4.ppm", 8, 8, 6);
    CHECK(run("warp --input t_cli_in4.ppm --transform t_cli_bad.tf --out x.ppm "
              "--method bicubic") != 0);
    CHECK(slurp("t_cli_err.txt").find("error:") != std::string::npos);

    CHECK(run("warp --input missing.ppm --transform t_cli_bad.tf --out x.ppm "
              "--method bicubic") != 0);
    CHECK(run("train --config no_such.cfg --out-weights w.ltew") != 0);
}
