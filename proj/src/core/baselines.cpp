#include "baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ltew {

double kernel_weight(Kernel1D k, double t) {
    const double a = std::abs(t);
    switch (k) {
        case Kernel1D::Bilinear:
            return a < 1.0 ? 1.0 - a : 0.0;
        case Kernel1D::Bicubic: {
            // Keys kernel, a = -0.5.
            if (a < 1.0) return (1.5 * a - 2.5) * a * a + 1.0;
            if (a < 2.0) return ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0;
            return 0.0;
        }
    }
    return 0.0;
}

int kernel_support(Kernel1D k) { return k == Kernel1D::Bilinear ? 2 : 4; }

float sample_kernel(const ImageBuffer& img, double px, double py, int c, Kernel1D k) {
    // Node i sits at pixel coordinate i + 0.5.
    const double tx = px - 0.5;
    const double ty = py - 0.5;
    const int bx = static_cast<int>(std::floor(tx));
    const int by = static_cast<int>(std::floor(ty));
    const double fx = tx - bx;
    const double fy = ty - by;
    const int lo = k == Kernel1D::Bilinear ? 0 : -1;
    const int hi = k == Kernel1D::Bilinear ? 1 : 2;
    double acc = 0.0;
    for (int dy = lo; dy <= hi; ++dy) {
        const double wy = kernel_weight(k, fy - dy);
        if (wy == 0.0) continue;
        const int iy = std::clamp(by + dy, 0, img.height - 1);
        double row = 0.0;
        for (int dx = lo; dx <= hi; ++dx) {
            const double wx = kernel_weight(k, fx - dx);
            if (wx == 0.0) continue;
            const int ix = std::clamp(bx + dx, 0, img.width - 1);
            row += wx * img.at(ix, iy, c);
        }
        acc += wy * row;
    }
    return static_cast<float>(acc);
}

ImageBuffer classical_warp(const ImageBuffer& img, const Transform& t, Kernel1D k) {
    if (img.width != t.in_w() || img.height != t.in_h())
        throw std::invalid_argument("classical_warp: image size does not match the transform input size");
    ImageBuffer out = ImageBuffer::make(t.out_w(), t.out_h());
    for (int oy = 0; oy < out.height; ++oy) {
        const double v = pixel_center_norm(oy, out.height);
        for (int ox = 0; ox < out.width; ++ox) {
            const double u = pixel_center_norm(ox, out.width);
            const auto x = t.apply_inverse({u, v});
            const size_t pi = static_cast<size_t>(oy) * out.width + ox;
            if (!x) {
                out.mask[pi] = 0;
                continue;
            }
            const double px = norm_to_pixel(x->x, img.width);
            const double py = norm_to_pixel(x->y, img.height);
            for (int c = 0; c < 3; ++c) out.rgb[pi * 3 + static_cast<size_t>(c)] = sample_kernel(img, px, py, c, k);
        }
    }
    return out;
}

std::vector<uint8_t> valid_mask(const Transform& t) {
    std::vector<uint8_t> mask(static_cast<size_t>(t.out_w()) * t.out_h(), 0);
    for (int oy = 0; oy < t.out_h(); ++oy) {
        const double v = pixel_center_norm(oy, t.out_h());
        for (int ox = 0; ox < t.out_w(); ++ox) {
            const double u = pixel_center_norm(ox, t.out_w());
            if (t.apply_inverse({u, v}))
                mask[static_cast<size_t>(oy) * t.out_w() + ox] = 255;
        }
    }
    return mask;
}

}  // namespace ltew
