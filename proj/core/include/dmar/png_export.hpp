#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dmar/volume.hpp"

namespace dmar {

/// round(255 (v - lo) / (hi - lo)) clamped to [0, 255].
std::vector<std::uint8_t> window_to_gray(const Image& img, double lo, double hi);

/// 8-bit grayscale PNG of an HU image after windowing.
void export_png(const Image& img, double lo, double hi, const std::filesystem::path& path);

void write_png_gray(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                    const std::vector<std::uint8_t>& pixels);
void write_png_rgb(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                   const std::vector<std::uint8_t>& rgb);

struct GrayPng {
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;
};
GrayPng read_png_gray(const std::filesystem::path& path);

/// Minimal RGB raster used for report plots.
struct Canvas {
    std::size_t rows, cols;
    std::vector<std::uint8_t> rgb;

    Canvas(std::size_t r, std::size_t c) : rows(r), cols(c), rgb(r * c * 3, 255) {}
    void put(long r, long c, std::array<std::uint8_t, 3> color);
    void line(long r0, long c0, long r1, long c1, std::array<std::uint8_t, 3> color);
    void dot(long r, long c, int radius, std::array<std::uint8_t, 3> color);
    void save(const std::filesystem::path& path) const { write_png_rgb(path, rows, cols, rgb); }
};

}  // namespace dmar
