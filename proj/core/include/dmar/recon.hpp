#pragma once

#include <string_view>

#include "dmar/projector.hpp"
#include "dmar/volume.hpp"

namespace dmar {

enum class FilterKind { RamLak, Hann };

std::string_view filter_name(FilterKind f);
FilterKind parse_filter(std::string_view name);

struct ReconParams {
    FilterKind filter = FilterKind::RamLak;
    std::size_t rows = 128;
    std::size_t cols = 128;
    double pixel_mm = 0.5;
    /// Zero-pad each row to twice the next power of two before filtering.
    /// Disabling gives a circular (periodic) filter.
    bool zero_pad = true;
};

/// Multiplies every angle row by |f| (cycles/mm), optionally Hann-windowed.
/// Input must be a log-projection; output is tagged Filtered.
Sinogram ramp_filter(const Sinogram& sino, FilterKind kind, bool zero_pad = true);

/// (pi / n_angles) * sum over views of the linearly interpolated filtered
/// sample at each pixel's detector coordinate. Output in mm^-1.
Image backproject(const Sinogram& filtered, const ReconParams& params);

Image fbp(const Sinogram& sino, const ReconParams& params);

/// mu (mm^-1) -> HU relative to `mu_water`, clamped to the volume HU range.
Image mu_to_hu(const Image& mu, double mu_water);
Image hu_to_mu(const Image& hu, double mu_water);

}  // namespace dmar
