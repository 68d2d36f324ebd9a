#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "dmar/projector.hpp"
#include "dmar/rng.hpp"
#include "dmar/volume.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("dmar_unit_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline dmar::Image random_image(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = 0.0,
                                double hi = 1.0) {
    dmar::Image img(rows, cols, 1.0);
    dmar::SeqRng rng(seed);
    for (auto& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

inline dmar::Image disk_image(std::size_t n, double pixel_mm, double radius_mm, double value) {
    dmar::Image img(n, n, pixel_mm, 0.0);
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x)
            if (std::hypot((x - c) * pixel_mm, (y - c) * pixel_mm) <= radius_mm) img(y, x) = value;
    return img;
}

// Disk with area-weighted edge pixels (8x8 supersampling).
inline dmar::Image smooth_disk_image(std::size_t n, double pixel_mm, double radius_mm, double value) {
    dmar::Image img(n, n, pixel_mm, 0.0);
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            int in = 0;
            for (int sy = 0; sy < 8; ++sy)
                for (int sx = 0; sx < 8; ++sx) {
                    const double px = (x - c - 0.5 + (sx + 0.5) / 8.0) * pixel_mm;
                    const double py = (y - c - 0.5 + (sy + 0.5) / 8.0) * pixel_mm;
                    in += std::hypot(px, py) <= radius_mm;
                }
            img(y, x) = value * in / 64.0;
        }
    return img;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testing
