#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "core/errors.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"

using namespace ltew;

namespace {

// Pixels on the exact k/255 grid survive an 8-bit round trip unchanged.
ImageBuffer quantized_test_image(int w, int h, uint64_t seed) {
    ImageBuffer img = ImageBuffer::make(w, h);
    Rng rng(seed);
    for (auto& v : img.rgb) v = static_cast<float>(rng.below(256)) / 255.0f;
    return img;
}

}  // namespace

TEST_CASE("png round trip is exact on the 8-bit grid") {
    const auto img = quantized_test_image(7, 5, 11ULL);
    save_image(img, "t_roundtrip.png");
    const auto back = load_image("t_roundtrip.png");
    REQUIRE(back.width == 7);
    REQUIRE(back.height == 5);
    for (size_t i = 0; i < img.rgb.size(); ++i) CHECK(back.rgb[i] == img.rgb[i]);
    for (uint8_t m : back.mask) CHECK(m == 255);
}

TEST_CASE("ppm round trip and cross-format consistency") {
    const auto img = quantized_test_image(6, 9, 12ULL);
    save_image(img, "t_roundtrip.ppm");
    save_image(img, "t_roundtrip2.png");
    const auto ppm = load_image("t_roundtrip.ppm");
    const auto png = load_image("t_roundtrip2.png");
    REQUIRE(ppm.width == png.width);
    REQUIRE(ppm.height == png.height);
    for (size_t i = 0; i < ppm.rgb.size(); ++i) {
        CHECK(ppm.rgb[i] == img.rgb[i]);
        CHECK(ppm.rgb[i] == png.rgb[i]);
    }
}

TEST_CASE("1x1 image round trip") {
    ImageBuffer img = ImageBuffer::make(1, 1);
    img.at(0, 0, 0) = 1.0f;
    img.at(0, 0, 1) = 0.0f;
    img.at(0, 0, 2) = 128.0f / 255.0f;
    for (const char* path : {"t_tiny.png", "t_tiny.ppm"}) {
        save_image(img, path);
        const auto back = load_image(path);
        REQUIRE(back.width == 1);
        REQUIRE(back.height == 1);
        for (int c = 0; c < 3; ++c) CHECK(back.at(0, 0, c) == img.at(0, 0, c));
    }
}

TEST_CASE("encode clamps out-of-range values") {
    ImageBuffer img = ImageBuffer::make(2, 1);
    img.at(0, 0, 0) = -0.5f;
    img.at(1, 0, 0) = 1.5f;
    save_image(img, "t_clamp.ppm");
    const auto back = load_image("t_clamp.ppm");
    CHECK(back.at(0, 0, 0) == 0.0f);
    CHECK(back.at(1, 0, 0) == 1.0f);
}

TEST_CASE("mask round trip through pgm and png") {
    std::vector<uint8_t> mask = {255, 0, 255, 0, 0, 255};
    for (const char* path : {"t_mask.pgm", "t_mask.png"}) {
        save_mask(mask, 3, 2, path);
        const auto back = load_mask(path, 3, 2);
        REQUIRE(back.size() == mask.size());
        for (size_t i = 0; i < mask.size(); ++i) CHECK(back[i] == mask[i]);
    }
    CHECK_THROWS_AS(load_mask("t_mask.pgm", 2, 3), FormatError);
}

TEST_CASE("io error surfaces") {
    CHECK_THROWS_AS(load_image("definitely_not_here.png"), IoError);
    {
        std::ofstream f("t_garbage.png", std::ios::binary);
        f << "this is not an image at all, just text padding beyond magic";
    }
    CHECK_THROWS_AS(load_image("t_garbage.png"), FormatError);
    {
        std::ofstream f("t_trunc.ppm", std::ios::binary);
        f << "P6\n4 4\n255\nxx";  // far too little pixel data
    }
    CHECK_THROWS_AS(load_image("t_trunc.ppm"), FormatError);
    {
        std::ofstream f("t_maxval.ppm", std::ios::binary);
        f << "P6\n1 1\n65535\nab";
    }
    CHECK_THROWS_AS(load_image("t_maxval.ppm"), FormatError);
    const auto img = ImageBuffer::make(2, 2);
    CHECK_THROWS_AS(save_image(img, "t_bad.jpg"), FormatError);
}

TEST_CASE("pnm comments and whitespace are tolerated") {
    {
        std::ofstream f("t_comment.ppm", std::ios::binary);
        f << "P6\n# a comment line\n 2 # trailing\n1\n255\n";
        const char px[6] = {0, 0, 0, (char)255, (char)255, (char)255};
        f.write(px, 6);
    }
    const auto img = load_image("t_comment.ppm");
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 1);
    CHECK(img.at(0, 0, 0) == 0.0f);
    CHECK(img.at(1, 0, 2) == 1.0f);
}

TEST_CASE("grayscale pgm loads replicated to rgb") {
    {
        std::ofstream f("t_gray.pgm", std::ios::binary);
        f << "P5\n2 1\n255\n";
        const char px[2] = {(char)51, (char)204};
        f.write(px, 2);
    }
    const auto img = load_image("t_gray.pgm");
    REQUIRE(img.width == 2);
    for (int c = 0; c < 3; ++c) {
        CHECK(img.at(0, 0, c) == doctest::Approx(0.2).epsilon(1e-6));
        CHECK(img.at(1, 0, c) == doctest::Approx(0.8).epsilon(1e-6));
    }
}
