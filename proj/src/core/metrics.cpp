#include "metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "errors.hpp"

namespace ltew {

namespace {

PsnrResult psnr_over(const ImageBuffer& a, const ImageBuffer& b,
                     const std::vector<uint8_t>* include) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("psnr: image sizes differ");
    const size_t n = static_cast<size_t>(a.width) * a.height;
    double sq = 0.0;
    long long count = 0;
    for (size_t i = 0; i < n; ++i) {
        if (include && !(*include)[i]) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = static_cast<double>(a.rgb[i * 3 + static_cast<size_t>(c)]) -
                             static_cast<double>(b.rgb[i * 3 + static_cast<size_t>(c)]);
            sq += d * d;
        }
        ++count;
    }
    PsnrResult r;
    r.valid_px = count;
    if (count == 0) {
        r.db = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    const double mse = sq / (3.0 * static_cast<double>(count));
    r.db = mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
    return r;
}

}  // namespace

PsnrResult psnr(const ImageBuffer& a, const ImageBuffer& b) { return psnr_over(a, b, nullptr); }

PsnrResult masked_psnr(const ImageBuffer& a, const ImageBuffer& b,
                       const std::vector<uint8_t>* extra_mask) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("psnr: image sizes differ");
    const size_t n = static_cast<size_t>(a.width) * a.height;
    if (extra_mask && extra_mask->size() != n)
        throw std::invalid_argument("psnr: extra mask size mismatch");
    std::vector<uint8_t> inter(n);
    for (size_t i = 0; i < n; ++i)
        inter[i] = a.mask[i] && b.mask[i] && (!extra_mask || (*extra_mask)[i]) ? 1 : 0;
    return psnr_over(a, b, &inter);
}

std::string format_metric_value(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_metric_report(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report '" + path + "' for writing");
    out << "image,metric,value,valid_px\n";
    for (const auto& r : rows)
        out << r.image << "," << r.metric << "," << format_metric_value(r.value) << ","
            << r.valid_px << "\n";
    if (!out) throw IoError("short write to report '" + path + "'");
}

}  // namespace ltew
