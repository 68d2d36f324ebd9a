#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dmar/autodiff.hpp"
#include "dmar/projector.hpp"
#include "dmar/volume.hpp"

namespace dmar {

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

std::size_t dtype_size(DType t);
std::string_view dtype_name(DType t);

/// Header: "PGMP", u16 version 1, u8 dtype, u8 ndim, u64 dims[ndim] (all
/// little-endian), then the C-order payload.
struct PgmpTensor {
    DType dtype = DType::F64;
    std::vector<std::uint64_t> dims;
    std::vector<std::uint8_t> payload;  // little-endian element bytes

    std::size_t numel() const;
};

std::vector<std::uint8_t> encode_pgmp(const PgmpTensor& t);
PgmpTensor decode_pgmp(const std::vector<std::uint8_t>& bytes);
void write_pgmp(const std::filesystem::path& path, const PgmpTensor& t);
PgmpTensor read_pgmp(const std::filesystem::path& path);

PgmpTensor to_pgmp(const std::vector<double>& v, std::vector<std::uint64_t> dims);
PgmpTensor to_pgmp(const std::vector<float>& v, std::vector<std::uint64_t> dims);
PgmpTensor to_pgmp(const std::vector<std::uint8_t>& v, std::vector<std::uint64_t> dims);
std::vector<double> pgmp_f64(const PgmpTensor& t);
std::vector<float> pgmp_f32(const PgmpTensor& t);
std::vector<std::uint8_t> pgmp_u8(const PgmpTensor& t);

/// Volumes are stored with dims (nz, ny, nx); images as (rows, cols).
PgmpTensor volume_to_pgmp(const Volume& v);
PgmpTensor mask_to_pgmp(const MaskVolume& v);
Volume volume_from_pgmp(const PgmpTensor& t, std::array<double, 3> spacing_mm);
MaskVolume mask_from_pgmp(const PgmpTensor& t, std::array<double, 3> spacing_mm);
PgmpTensor image_to_pgmp(const Image& img);
Image image_from_pgmp(const PgmpTensor& t, double spacing_mm);

/// Sinogram payload (n_angles, n_detectors) plus a JSON sidecar holding the
/// unit tag and geometry: `<path>` and `<path>.json`.
void write_sinogram(const std::filesystem::path& path, const Sinogram& s);
Sinogram read_sinogram(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Ordered named tensors in a directory: one file per tensor plus index.json.
void write_archive(const std::filesystem::path& dir, const std::vector<std::pair<std::string, PgmpTensor>>& tensors);
std::vector<std::pair<std::string, PgmpTensor>> read_archive(const std::filesystem::path& dir);

template <class T>
PgmpTensor tensor_to_pgmp(const ad::Tensor<T>& t);
template <class T>
ad::Tensor<T> tensor_from_pgmp(const PgmpTensor& t);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace dmar
