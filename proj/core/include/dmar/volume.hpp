#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dmar/error.hpp"

namespace dmar {

/// Dense 2-D grid, row-major (row = y, col = x).
template <class T>
struct Grid2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double spacing_mm = 1.0;
    std::vector<T> data;

    Grid2() = default;
    Grid2(std::size_t rows_, std::size_t cols_, double spacing = 1.0, T fill = T{})
        : rows(rows_), cols(cols_), spacing_mm(spacing), data(rows_ * cols_, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    template <class U>
    bool same_shape(const Grid2<U>& o) const noexcept { return rows == o.rows && cols == o.cols; }
    friend bool operator==(const Grid2&, const Grid2&) = default;
};

/// Dense 3-D grid in C order: index = (z * ny + y) * nx + x.
template <class T>
struct Grid3 {
    std::array<std::size_t, 3> dims{0, 0, 0};  // nx, ny, nz
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<T> data;

    Grid3() = default;
    Grid3(std::array<std::size_t, 3> d, std::array<double, 3> spacing, T fill = T{})
        : dims(d), spacing_mm(spacing), data(d[0] * d[1] * d[2], fill) {}

    std::size_t nx() const noexcept { return dims[0]; }
    std::size_t ny() const noexcept { return dims[1]; }
    std::size_t nz() const noexcept { return dims[2]; }
    std::size_t size() const noexcept { return data.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return (z * dims[1] + y) * dims[0] + x;
    }
    T& operator()(std::size_t x, std::size_t y, std::size_t z) { return data[index(x, y, z)]; }
    const T& operator()(std::size_t x, std::size_t y, std::size_t z) const { return data[index(x, y, z)]; }

    template <class U>
    bool same_shape(const Grid3<U>& o) const noexcept { return dims == o.dims; }

    Grid2<T> slice(std::size_t z) const {
        if (z >= dims[2]) throw RangeError("slice index out of range");
        Grid2<T> out(dims[1], dims[0], spacing_mm[0]);
        const auto off = z * dims[0] * dims[1];
        std::copy(data.begin() + static_cast<std::ptrdiff_t>(off),
                  data.begin() + static_cast<std::ptrdiff_t>(off + out.size()), out.data.begin());
        return out;
    }

    void set_slice(std::size_t z, const Grid2<T>& img) {
        if (z >= dims[2] || img.rows != dims[1] || img.cols != dims[0])
            throw ShapeError("slice shape does not match volume");
        std::copy(img.data.begin(), img.data.end(),
                  data.begin() + static_cast<std::ptrdiff_t>(z * dims[0] * dims[1]));
    }

    friend bool operator==(const Grid3&, const Grid3&) = default;
};

/// HU image / volume. Air = -1000, water = 0.
using Image = Grid2<double>;
using Mask2 = Grid2<std::uint8_t>;
using Volume = Grid3<double>;
/// Per-voxel FDI tooth code (11-48) or 0 for background.
using LabelVolume = Grid3<std::uint8_t>;
using MaskVolume = Grid3<std::uint8_t>;

inline constexpr double kHuMin = -1024.0;
inline constexpr double kHuMax = 30000.0;

/// Stacks equally-shaped 2-D slices into a volume.
template <class T>
Grid3<T> stack_slices(std::span<const Grid2<T>> slices, double slice_spacing_mm = 1.0) {
    if (slices.empty()) throw ParameterError("stack_slices: no slices");
    const auto& first = slices.front();
    Grid3<T> out({first.cols, first.rows, slices.size()},
                 {first.spacing_mm, first.spacing_mm, slice_spacing_mm});
    for (std::size_t z = 0; z < slices.size(); ++z) out.set_slice(z, slices[z]);
    return out;
}

}  // namespace dmar
