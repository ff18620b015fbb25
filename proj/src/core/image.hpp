#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ltew {

// RGB image in [0,1] floats, row-major interleaved, with a per-pixel validity
// mask (255 = valid). Freshly made or loaded images are fully valid.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;      // height * width * 3
    std::vector<uint8_t> mask;   // height * width

    static ImageBuffer make(int w, int h, float fill = 0.0f);

    float at(int x, int y, int c) const {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
    }
    float& at(int x, int y, int c) {
        return rgb[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
    }
    bool valid(int x, int y) const { return mask[static_cast<size_t>(y) * width + x] != 0; }
};

// Decodes PNG (any bit depth/colour type, normalized to 8-bit RGB), binary
// PPM (P6, maxval 255) or binary PGM (P5, replicated to RGB). Values map to
// [0,1] via v/255. Throws IoError (unreadable) or FormatError (malformed).
ImageBuffer load_image(const std::string& path);

// Encodes via round(v*255) clamped to [0,255]. Format chosen by extension:
// .png or .ppm.
void save_image(const ImageBuffer& img, const std::string& path);

// Masks travel as 8-bit grayscale images, 255 = valid; loading thresholds at
// 128. Extensions: .png or .pgm.
void save_mask(const std::vector<uint8_t>& mask, int width, int height,
               const std::string& path);
std::vector<uint8_t> load_mask(const std::string& path, int expect_w, int expect_h);

}  // namespace ltew
