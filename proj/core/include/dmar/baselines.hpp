#pragma once

#include <string>
#include <vector>

#include "dmar/phantom.hpp"
#include "dmar/projector.hpp"
#include "dmar/recon.hpp"
#include "dmar/volume.hpp"

namespace dmar {

/// Boolean sinogram mask of rays that cross metal.
struct MetalTrace {
    ProjectionGeometry geometry;
    std::vector<std::uint8_t> mask;  // angle-major, 1 = inside trace

    bool operator()(std::size_t a, std::size_t d) const { return mask[a * geometry.n_detectors + d] != 0; }
    std::size_t count() const;
};

/// Warning channel for the interpolation baselines.
struct MarDiagnostics {
    std::vector<std::string> warnings;
    std::size_t full_rows = 0;            // fully masked angle rows filled with the row mean
    std::size_t prior_fallbacks = 0;      // NMAR intervals reverted to plain LI
};

/// trace = forward-projected mask path length > 0.
MetalTrace metal_trace(const Mask2& metal_mask, double pixel_mm, const ProjectionGeometry& geom);
MetalTrace metal_trace(const Sinogram& metal_path_lengths);

/// Per angle, every maximal run of traced bins is replaced by the straight line
/// between its nearest untraced neighbours (one-sided runs take the single
/// neighbour's value).
Sinogram li_correct(const Sinogram& sino, const MetalTrace& trace, MarDiagnostics* diag = nullptr);

struct NmarParams {
    HuThresholds thresholds;
    double mu_water = 0.0;  // mm^-1 at the simulation's effective energy
    double epsilon = 1e-3;  // floor on the prior sinogram used as divisor
};

/// Air / tissue / bone quantisation of a reconstruction (HU) in mu units.
/// Tissue and bone take the mean mu of their classes. When the uncorrected
/// image is given, pixels above bone_hi there (the metal) join the bone
/// class: implants sit in bone, and leaving them as tissue biases the prior
/// inside the trace.
Image nmar_prior(const Image& recon_hu, const NmarParams& params, const Image* uncorrected_hu = nullptr);

/// LI applied to sino / prior_sino over the trace, then multiplied back.
Sinogram nmar_with_prior(const Sinogram& sino, const MetalTrace& trace, const Sinogram& prior_sino,
                         double epsilon, MarDiagnostics* diag = nullptr);

Sinogram nmar_correct(const Sinogram& sino, const MetalTrace& trace, const Image& recon_hu,
                      const ProjectionGeometry& geom, const NmarParams& params, MarDiagnostics* diag = nullptr,
                      const Image* uncorrected_hu = nullptr);

enum class MarMethod { None, Li, Nmar };

std::string_view mar_method_name(MarMethod m);
MarMethod parse_mar_method(std::string_view name);

/// Corrects the sinogram with `method` and reconstructs to HU. NMAR builds its
/// prior from the LI reconstruction.
Image mar_reconstruct(const Sinogram& sino, const MetalTrace& trace, MarMethod method, const ReconParams& recon,
                      const NmarParams& params, MarDiagnostics* diag = nullptr);

}  // namespace dmar
