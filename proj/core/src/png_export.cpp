#include "dmar/png_export.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>

#include "dmar/error.hpp"

namespace dmar {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, std::size_t rows, std::size_t cols, int color_type, int channels,
               const std::uint8_t* data) {
    if (rows == 0 || cols == 0) throw ShapeError("png: empty image");
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: write failed for " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t r = 0; r < rows; ++r)
        png_write_row(png, const_cast<png_bytep>(data + r * cols * static_cast<std::size_t>(channels)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

std::vector<std::uint8_t> window_to_gray(const Image& img, double lo, double hi) {
    if (!(hi > lo)) throw ParameterError("png window: hi must exceed lo");
    std::vector<std::uint8_t> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = img.data[i];
        if (!std::isfinite(v)) throw NumericError("png export: non-finite pixel");
        out[i] = static_cast<std::uint8_t>(std::clamp(std::round(255.0 * (v - lo) / (hi - lo)), 0.0, 255.0));
    }
    return out;
}

void export_png(const Image& img, double lo, double hi, const std::filesystem::path& path) {
    write_png_gray(path, img.rows, img.cols, window_to_gray(img, lo, hi));
}

void write_png_gray(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                    const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != rows * cols) throw ShapeError("png: pixel count mismatch");
    write_png(path, rows, cols, PNG_COLOR_TYPE_GRAY, 1, pixels.data());
}

void write_png_rgb(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                   const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != rows * cols * 3) throw ShapeError("png: pixel count mismatch");
    write_png(path, rows, cols, PNG_COLOR_TYPE_RGB, 3, rgb.data());
}

GrayPng read_png_gray(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("png: cannot read " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    GrayPng out;
    out.rows = image.height;
    out.cols = image.width;
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&image);
        throw IoError("png: decode failed for " + path.string());
    }
    return out;
}

void Canvas::put(long r, long c, std::array<std::uint8_t, 3> color) {
    if (r < 0 || c < 0 || r >= static_cast<long>(rows) || c >= static_cast<long>(cols)) return;
    const std::size_t i = (static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)) * 3;
    rgb[i] = color[0];
    rgb[i + 1] = color[1];
    rgb[i + 2] = color[2];
}

void Canvas::line(long r0, long c0, long r1, long c1, std::array<std::uint8_t, 3> color) {
    const long n = std::max({std::abs(r1 - r0), std::abs(c1 - c0), 1L});
    for (long k = 0; k <= n; ++k)
        put(r0 + (r1 - r0) * k / n, c0 + (c1 - c0) * k / n, color);
}

void Canvas::dot(long r, long c, int radius, std::array<std::uint8_t, 3> color) {
    for (long dr = -radius; dr <= radius; ++dr)
        for (long dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= static_cast<long>(radius) * radius) put(r + dr, c + dc, color);
}

}  // namespace dmar
