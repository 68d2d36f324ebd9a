#pragma once

#include <limits>

#include "dmar/volume.hpp"

namespace dmar {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 20 log10(range) - 10 log10(MSE).
double psnr(const Image& a, const Image& b, double data_range);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// k1 = 0.01, k2 = 0.03. Both sides must be >= 11.
double ssim(const Image& a, const Image& b, double data_range);

struct MetricWindow {
    double lo = -1000.0;
    double hi = 3000.0;
    double range() const { return hi - lo; }
};

/// Clips `img` to the window and copies `reference` into metal pixels so that
/// metrics ignore the implant itself.
Image prepare_for_metrics(const Image& img, const Image& reference, const Mask2* metal, const MetricWindow& w);

}  // namespace dmar
