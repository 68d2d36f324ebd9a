#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dmar/phantom.hpp"
#include "dmar/physics_model.hpp"
#include "dmar/projector.hpp"
#include "dmar/recon.hpp"

namespace dmar {

struct SimulationParams {
    ProjectionGeometry geometry;
    SpectrumParams spectrum;
    NoiseParams noise;
    HuThresholds thresholds;
    FilterKind filter = FilterKind::RamLak;
    /// false: the artifact chain uses a single bin at the effective energy.
    bool polychromatic = true;
    /// false: skip Poisson and electronic noise (scatter still follows noise.spr).
    bool photon_noise = true;
};

struct SliceSinograms {
    Sinogram clean;       // log-projection, monochromatic, metal-free
    Sinogram artifact;    // log-projection after the full degradation chain
    Sinogram metal_path;  // path length through the metal mask
};

struct CasePair {
    std::vector<std::size_t> slices;  // source z index of each output slice
    Volume clean;                     // HU
    Volume artifact;                  // HU
    MaskVolume metal_mask;
    MaskVolume edge;
    std::vector<SliceSinograms> sinograms;
    double effective_energy_kev = 0.0;
    double mu_water = 0.0;            // mm^-1 at the effective energy
};

/// Slice with the largest metal cross-section; the middle slice when there is none.
std::size_t select_slice(const MaskVolume& metal_mask);

/// Simulates the listed axial slices (default: select_slice). The clean slice is
/// the FBP of a noiseless metal-free monochromatic projection at the effective
/// energy; the artifact slice reconstructs the polychromatic + scatter + Poisson
/// + electronic chain with metal inserted. Bit-identical for a given seed
/// regardless of thread count.
CasePair simulate_case(const Phantom& phantom, const RestorationPlan& plan, const SimulationParams& params,
                       std::uint64_t seed, std::optional<std::vector<std::size_t>> slices = std::nullopt);

/// Degrades one slice's material map; exposed for baselines and tests.
Sinogram degrade_slice(const std::array<Sinogram, 3>& paths, const EnergySpectrum& spectrum,
                       const NoiseParams& noise, bool photon_noise, std::uint64_t seed);

}  // namespace dmar
