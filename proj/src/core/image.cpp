#include "image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "errors.hpp"

namespace ltew {

namespace {

uint8_t to_byte(float v) {
    const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<uint8_t>(std::lround(c * 255.0f));
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageBuffer decode_png(std::FILE* f, const std::string& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("png: allocation failed");
    }
    std::vector<png_bytep> rows;
    ImageBuffer img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: corrupt file '" + path + "'");
    }
    png_init_io(png, f);
    png_read_info(png, info);

    // Normalize every variant down to 8-bit RGB.
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    if (w == 0 || h == 0 || w > 1u << 20 || h > 1u << 20) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: unreasonable dimensions in '" + path + "'");
    }
    if (png_get_rowbytes(png, info) != w * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: unexpected row layout in '" + path + "'");
    }

    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    img = ImageBuffer::make(static_cast<int>(w), static_cast<int>(h));
    for (size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

void encode_png(const std::string& path, const uint8_t* data, int w, int h, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: write failed for '" + path + "'");
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(data + static_cast<size_t>(y) * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// PPM/PGM header token reader: skips whitespace and # comments.
int next_pnm_int(std::FILE* f, const std::string& path) {
    int c;
    for (;;) {
        c = std::fgetc(f);
        if (c == '#') {
            while (c != EOF && c != '\n') c = std::fgetc(f);
        } else if (c == EOF || !std::isspace(c)) {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("pnm: malformed header in '" + path + "'");
    long v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 20) throw FormatError("pnm: unreasonable header value in '" + path + "'");
        c = std::fgetc(f);
    }
    if (c != EOF && !std::isspace(c)) throw FormatError("pnm: malformed header in '" + path + "'");
    return static_cast<int>(v);
}

ImageBuffer decode_pnm(std::FILE* f, const std::string& path, bool gray) {
    const int w = next_pnm_int(f, path);
    const int h = next_pnm_int(f, path);
    const int maxval = next_pnm_int(f, path);
    if (w < 1 || h < 1) throw FormatError("pnm: bad dimensions in '" + path + "'");
    if (maxval != 255) throw FormatError("pnm: only maxval 255 supported, '" + path + "'");
    const int ch = gray ? 1 : 3;
    std::vector<uint8_t> bytes(static_cast<size_t>(w) * h * ch);
    if (std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size())
        throw FormatError("pnm: truncated pixel data in '" + path + "'");
    ImageBuffer img = ImageBuffer::make(w, h);
    for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
        for (int c = 0; c < 3; ++c)
            img.rgb[i * 3 + static_cast<size_t>(c)] =
                static_cast<float>(bytes[i * static_cast<size_t>(ch) + static_cast<size_t>(gray ? 0 : c)]) / 255.0f;
    }
    return img;
}

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

ImageBuffer ImageBuffer::make(int w, int h, float fill) {
    if (w < 1 || h < 1) throw std::invalid_argument("image dimensions must be positive");
    ImageBuffer img;
    img.width = w;
    img.height = h;
    img.rgb.assign(static_cast<size_t>(w) * h * 3, fill);
    img.mask.assign(static_cast<size_t>(w) * h, 255);
    return img;
}

ImageBuffer load_image(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open image '" + path + "'");
    unsigned char magic[8] = {0};
    const size_t got = std::fread(magic, 1, sizeof magic, f.get());
    std::rewind(f.get());
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) return decode_png(f.get(), path);
    if (got >= 2 && magic[0] == 'P' && (magic[1] == '6' || magic[1] == '5')) {
        std::fseek(f.get(), 2, SEEK_SET);
        return decode_pnm(f.get(), path, magic[1] == '5');
    }
    throw FormatError("unsupported image format in '" + path + "' (want PNG, P6 or P5)");
}

void save_image(const ImageBuffer& img, const std::string& path) {
    if (img.width < 1 || img.height < 1 || img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
        throw std::invalid_argument("malformed image buffer");
    std::vector<uint8_t> bytes(img.rgb.size());
    for (size_t i = 0; i < img.rgb.size(); ++i) bytes[i] = to_byte(img.rgb[i]);
    if (has_suffix(path, ".png")) {
        encode_png(path, bytes.data(), img.width, img.height, 3);
    } else if (has_suffix(path, ".ppm")) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << "P6\n" << img.width << " " << img.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + path + "'");
    } else {
        throw FormatError("unsupported output image extension for '" + path + "' (want .png or .ppm)");
    }
}

void save_mask(const std::vector<uint8_t>& mask, int width, int height, const std::string& path) {
    if (width < 1 || height < 1 || mask.size() != static_cast<size_t>(width) * height)
        throw std::invalid_argument("malformed mask buffer");
    std::vector<uint8_t> bytes(mask.size());
    for (size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
    if (has_suffix(path, ".png")) {
        encode_png(path, bytes.data(), width, height, 1);
    } else if (has_suffix(path, ".pgm")) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out << "P5\n" << width << " " << height << "\n255\n";
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + path + "'");
    } else {
        throw FormatError("unsupported mask extension for '" + path + "' (want .png or .pgm)");
    }
}

std::vector<uint8_t> load_mask(const std::string& path, int expect_w, int expect_h) {
    const ImageBuffer img = load_image(path);
    if (img.width != expect_w || img.height != expect_h)
        throw FormatError("mask '" + path + "' is " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + ", expected " + std::to_string(expect_w) +
                          "x" + std::to_string(expect_h));
    std::vector<uint8_t> mask(static_cast<size_t>(expect_w) * expect_h);
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = img.rgb[i * 3] >= 0.5f ? 255 : 0;
    return mask;
}

}  // namespace ltew
