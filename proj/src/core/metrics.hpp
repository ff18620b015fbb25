#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"

namespace ltew {

// db is +infinity when the compared pixels agree exactly, NaN when no pixel
// is included at all.
struct PsnrResult {
    double db = 0.0;
    long long valid_px = 0;
};

// Plain PSNR over every pixel, all three channels, values in [0,1]:
// 10*log10(1/MSE). Sizes must match.
PsnrResult psnr(const ImageBuffer& a, const ImageBuffer& b);

// PSNR over the intersection of both images' masks, optionally intersected
// with an extra mask (out_w*out_h bytes, nonzero = include).
PsnrResult masked_psnr(const ImageBuffer& a, const ImageBuffer& b,
                       const std::vector<uint8_t>* extra_mask = nullptr);

struct MetricRow {
    std::string image;
    std::string metric;  // "psnr" | "mpsnr"
    double value = 0.0;
    long long valid_px = 0;
};

// CSV with header image,metric,value,valid_px; +inf renders as "inf".
void write_metric_report(const std::string& path, const std::vector<MetricRow>& rows);

std::string format_metric_value(double v);

}  // namespace ltew
