#pragma once

#include <cstdint>
#include <vector>

#include "geometry.hpp"
#include "image.hpp"

namespace ltew {

// Separable interpolation kernels: tent (support 2) and Keys bicubic with
// a = -0.5 (support 4). Both are partitions of unity and reproduce node
// values exactly.
enum class Kernel1D { Bilinear, Bicubic };

double kernel_weight(Kernel1D k, double t);
int kernel_support(Kernel1D k);  // taps per axis

// Classical inverse-mapping warp: each output pixel samples the input at
// f^-1(y) with the separable kernel. Kernel taps are clamped to the image
// edge; a pixel's validity is decided by the query point alone (inverse
// in-domain or not). Out-of-domain pixels are black with mask 0.
// img must match t's input size; output size comes from t.
ImageBuffer classical_warp(const ImageBuffer& img, const Transform& t, Kernel1D k);

// The mask classical_warp would produce, without touching pixels.
std::vector<uint8_t> valid_mask(const Transform& t);

// Single continuous sample with clamp-to-edge taps, c-th channel, input pixel
// coordinates (pixel centers at half-integers).
float sample_kernel(const ImageBuffer& img, double in_px_x, double in_px_y, int c, Kernel1D k);

}  // namespace ltew
