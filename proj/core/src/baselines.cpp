#include "dmar/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmar/error.hpp"

namespace dmar {

std::size_t MetalTrace::count() const {
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; }));
}

MetalTrace metal_trace(const Mask2& metal_mask, double pixel_mm, const ProjectionGeometry& geom) {
    Image field(metal_mask.rows, metal_mask.cols, pixel_mm, 0.0);
    for (std::size_t i = 0; i < field.size(); ++i) field.data[i] = metal_mask.data[i] ? 1.0 : 0.0;
    return metal_trace(project(field, geom));
}

MetalTrace metal_trace(const Sinogram& metal_path_lengths) {
    metal_path_lengths.expect(SinogramUnit::PathLength, "metal_trace");
    MetalTrace t{metal_path_lengths.geometry, std::vector<std::uint8_t>(metal_path_lengths.data.size(), 0)};
    for (std::size_t k = 0; k < t.mask.size(); ++k) t.mask[k] = metal_path_lengths.data[k] > 0.0 ? 1 : 0;
    return t;
}

namespace {

struct Run {
    std::size_t begin, end;  // [begin, end)
};

std::vector<Run> traced_runs(const MetalTrace& trace, std::size_t a) {
    std::vector<Run> runs;
    const std::size_t nd = trace.geometry.n_detectors;
    std::size_t d = 0;
    while (d < nd) {
        if (!trace(a, d)) {
            ++d;
            continue;
        }
        const std::size_t start = d;
        while (d < nd && trace(a, d)) ++d;
        runs.push_back({start, d});
    }
    return runs;
}

void check_trace(const Sinogram& sino, const MetalTrace& trace, std::string_view op) {
    sino.expect(SinogramUnit::LogProjection, op);
    if (!(sino.geometry == trace.geometry) || trace.mask.size() != sino.data.size())
        throw ShapeError(std::string(op) + ": trace geometry does not match the sinogram");
}

// Fills one run of `row` in place by interpolating between its anchors.
void interpolate_run(std::span<double> row, Run run) {
    const std::size_t nd = row.size();
    const bool has_left = run.begin > 0;
    const bool has_right = run.end < nd;
    if (has_left && has_right) {
        const double a = row[run.begin - 1];
        const double b = row[run.end];
        const double span = static_cast<double>(run.end - (run.begin - 1));
        for (std::size_t d = run.begin; d < run.end; ++d)
            row[d] = a + (b - a) * static_cast<double>(d - (run.begin - 1)) / span;
    } else if (has_left) {
        std::fill(row.begin() + static_cast<std::ptrdiff_t>(run.begin), row.begin() + static_cast<std::ptrdiff_t>(run.end),
                  row[run.begin - 1]);
    } else if (has_right) {
        std::fill(row.begin() + static_cast<std::ptrdiff_t>(run.begin), row.begin() + static_cast<std::ptrdiff_t>(run.end),
                  row[run.end]);
    }
}

}  // namespace

Sinogram li_correct(const Sinogram& sino, const MetalTrace& trace, MarDiagnostics* diag) {
    check_trace(sino, trace, "li_correct");
    Sinogram out = sino;
    const std::size_t nd = sino.n_detectors();
    for (std::size_t a = 0; a < sino.n_angles(); ++a) {
        std::span<double> row(out.data.data() + a * nd, nd);
        for (const auto& run : traced_runs(trace, a)) {
            if (run.begin == 0 && run.end == nd) {
                const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(nd);
                std::fill(row.begin(), row.end(), mean);
                if (diag) {
                    ++diag->full_rows;
                    diag->warnings.push_back("li: angle " + std::to_string(a) + " fully traced; filled with row mean");
                }
                continue;
            }
            interpolate_run(row, run);
        }
    }
    return out;
}

Image nmar_prior(const Image& recon_hu, const NmarParams& params, const Image* uncorrected_hu) {
    params.thresholds.validate();
    if (!(params.mu_water > 0.0)) throw ParameterError("nmar: mu_water must be positive");
    if (uncorrected_hu && !uncorrected_hu->same_shape(recon_hu))
        throw ShapeError("nmar_prior: uncorrected image shape mismatch");
    const auto& th = params.thresholds;
    const auto to_mu = [&](double hu) { return params.mu_water * (1.0 + hu / 1000.0); };
    double bone_sum = 0.0, tissue_sum = 0.0;
    std::size_t bone_n = 0, tissue_n = 0;
    for (double hu : recon_hu.data) {
        if (hu < th.air) continue;
        if (hu >= th.bone_lo && hu <= th.bone_hi) {
            bone_sum += to_mu(hu);
            ++bone_n;
        } else if (hu < th.bone_lo) {
            tissue_sum += to_mu(hu);
            ++tissue_n;
        }
    }
    const double mu_bone = bone_n ? bone_sum / static_cast<double>(bone_n) : params.mu_water;
    const double mu_tissue = tissue_n ? tissue_sum / static_cast<double>(tissue_n) : params.mu_water;

    Image prior(recon_hu.rows, recon_hu.cols, recon_hu.spacing_mm, 0.0);
    for (std::size_t i = 0; i < prior.size(); ++i) {
        const double hu = recon_hu.data[i];
        if (uncorrected_hu && uncorrected_hu->data[i] > th.bone_hi)
            prior.data[i] = mu_bone;
        else if (hu < th.air)
            prior.data[i] = 0.0;
        else if (hu < th.bone_lo || hu > th.bone_hi)  // remnants above bone_hi count as tissue
            prior.data[i] = mu_tissue;
        else
            prior.data[i] = mu_bone;
    }
    return prior;
}

Sinogram nmar_with_prior(const Sinogram& sino, const MetalTrace& trace, const Sinogram& prior_sino, double epsilon,
                         MarDiagnostics* diag) {
    check_trace(sino, trace, "nmar_correct");
    if (!(prior_sino.geometry == sino.geometry)) throw ShapeError("nmar_correct: prior sinogram geometry mismatch");
    Sinogram out = sino;
    const std::size_t nd = sino.n_detectors();
    std::vector<double> normalized(nd), floor_prior(nd);
    for (std::size_t a = 0; a < sino.n_angles(); ++a) {
        const auto runs = traced_runs(trace, a);
        if (runs.empty()) continue;
        std::span<double> row(out.data.data() + a * nd, nd);
        for (std::size_t d = 0; d < nd; ++d) {
            floor_prior[d] = std::max(prior_sino(a, d), epsilon);
            normalized[d] = sino(a, d) / floor_prior[d];
        }
        for (const auto& run : runs) {
            if (run.begin == 0 && run.end == nd) {
                const double mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(nd);
                std::fill(row.begin(), row.end(), mean);
                if (diag) {
                    ++diag->full_rows;
                    diag->warnings.push_back("nmar: angle " + std::to_string(a) + " fully traced; filled with row mean");
                }
                continue;
            }
            const bool weak_left = run.begin > 0 && prior_sino(a, run.begin - 1) <= epsilon;
            const bool weak_right = run.end < nd && prior_sino(a, run.end) <= epsilon;
            if (weak_left || weak_right) {
                interpolate_run(row, run);
                if (diag) {
                    ++diag->prior_fallbacks;
                    diag->warnings.push_back("nmar: angle " + std::to_string(a) +
                                             " prior below epsilon at an anchor; plain LI used");
                }
                continue;
            }
            interpolate_run(std::span<double>(normalized), run);
            for (std::size_t d = run.begin; d < run.end; ++d) row[d] = normalized[d] * floor_prior[d];
        }
    }
    return out;
}

Sinogram nmar_correct(const Sinogram& sino, const MetalTrace& trace, const Image& recon_hu,
                      const ProjectionGeometry& geom, const NmarParams& params, MarDiagnostics* diag,
                      const Image* uncorrected_hu) {
    const Image prior = nmar_prior(recon_hu, params, uncorrected_hu);
    Sinogram prior_sino = project(prior, geom);
    prior_sino.unit = SinogramUnit::LogProjection;
    return nmar_with_prior(sino, trace, prior_sino, params.epsilon, diag);
}

std::string_view mar_method_name(MarMethod m) {
    switch (m) {
        case MarMethod::None: return "none";
        case MarMethod::Li: return "li";
        case MarMethod::Nmar: return "nmar";
    }
    return "?";
}

MarMethod parse_mar_method(std::string_view name) {
    if (name == "none") return MarMethod::None;
    if (name == "li") return MarMethod::Li;
    if (name == "nmar") return MarMethod::Nmar;
    throw ParameterError("unknown MAR method '" + std::string(name) + "' (expected li, nmar or none)");
}

Image mar_reconstruct(const Sinogram& sino, const MetalTrace& trace, MarMethod method, const ReconParams& recon,
                      const NmarParams& params, MarDiagnostics* diag) {
    if (!(params.mu_water > 0.0)) throw ParameterError("mar_reconstruct: mu_water must be positive");
    const Image raw_hu = mu_to_hu(fbp(sino, recon), params.mu_water);
    if (method == MarMethod::None) return raw_hu;
    const Sinogram li = li_correct(sino, trace, diag);
    const Image li_hu = mu_to_hu(fbp(li, recon), params.mu_water);
    if (method == MarMethod::Li) return li_hu;
    return mu_to_hu(fbp(nmar_correct(sino, trace, li_hu, sino.geometry, params, diag, &raw_hu), recon),
                    params.mu_water);
}

}  // namespace dmar
