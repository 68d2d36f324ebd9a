#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "dmar/phantom.hpp"
#include "dmar/physics_model.hpp"
#include "dmar/volume.hpp"

namespace dmar {

/// Parallel-beam geometry with `n_angles` views uniformly spanning [0, pi).
struct ProjectionGeometry {
    std::size_t n_angles = 180;
    std::size_t n_detectors = 184;
    double detector_spacing_mm = 0.5;
    double step_fraction = 0.5;  // ray sampling step / pixel size

    double angle(std::size_t i) const;
    /// Signed detector offset (mm) of bin `d`, zero at the array centre.
    double detector_offset(std::size_t d) const;

    /// Throws ParameterError unless the detector row covers the image diagonal.
    void check_covers(std::size_t rows, std::size_t cols, double pixel_mm) const;

    /// Smallest centred detector row covering an image diagonal at `pixel_mm` pitch.
    static ProjectionGeometry covering(std::size_t rows, std::size_t cols, double pixel_mm, std::size_t n_angles);

    friend bool operator==(const ProjectionGeometry&, const ProjectionGeometry&) = default;
};

enum class SinogramUnit : std::uint8_t { PathLength, LogProjection, Counts, Intensity, Filtered };

std::string_view unit_name(SinogramUnit u);
SinogramUnit parse_unit(std::string_view name);

struct Sinogram {
    ProjectionGeometry geometry;
    SinogramUnit unit = SinogramUnit::LogProjection;
    std::vector<double> data;  // angle-major: data[a * n_detectors + d]

    Sinogram() = default;
    Sinogram(const ProjectionGeometry& g, SinogramUnit u, double fill = 0.0)
        : geometry(g), unit(u), data(g.n_angles * g.n_detectors, fill) {}

    std::size_t n_angles() const noexcept { return geometry.n_angles; }
    std::size_t n_detectors() const noexcept { return geometry.n_detectors; }
    double& operator()(std::size_t a, std::size_t d) { return data[a * geometry.n_detectors + d]; }
    double operator()(std::size_t a, std::size_t d) const { return data[a * geometry.n_detectors + d]; }

    /// Throws UnitError when the tag differs.
    void expect(SinogramUnit u, std::string_view op) const;
};

struct NoiseParams {
    double n0 = 5e5;             // photons per bin (identified with I0)
    double n_min = 10.0;         // post-Poisson floor
    double sigma_e = 5.0;        // electronic noise, counts
    double spr = 0.1;            // scatter-to-primary ratio
    double sigma_scatter_px = 10.0;

    void validate() const;
};

/// Line integral of an arbitrary field (unit: field * mm). Samples the
/// bilinearly interpolated image every `step_fraction` pixels along each ray.
Sinogram project(const Image& field, const ProjectionGeometry& geom);

/// Density-weighted path length per material (water, bone, metal).
std::array<Sinogram, 3> path_lengths(const MaterialSlice& map, const ProjectionGeometry& geom);

/// P = -ln( sum_i w_i exp(-sum_m L_m mu_m(E_i)) ), elementwise.
Sinogram polychromatic_project(const std::array<Sinogram, 3>& paths, const EnergySpectrum& spectrum,
                               const MaterialTable& table = MaterialTable::reference());

/// Beer-Lambert at a single energy: P = sum_m mu_m(E0) L_m.
Sinogram monochromatic_project(const std::array<Sinogram, 3>& paths, double energy_kev,
                               const MaterialTable& table = MaterialTable::reference());

/// Unit-sum truncated (4 sigma) 1-D Gaussian; the 2-D kernel is its outer product.
std::vector<double> scatter_kernel_1d(double sigma_px);

/// I_total = I + SPR * (I conv kappa_sigma) over the (angle, detector) plane,
/// symmetric-reflect boundaries.
Sinogram apply_scatter(const Sinogram& primary_intensity, const NoiseParams& params);

/// Poisson counts around N0 exp(-P), floored at N_min. Every bin draws from a
/// counter-based stream keyed on (seed, angle, detector).
Sinogram apply_photon_noise(const Sinogram& projection, const NoiseParams& params, std::uint64_t seed);

/// Poisson sampler used by apply_photon_noise: inversion below mean 50,
/// rounded Gaussian above.
double sample_poisson(double mean, double u_inversion, double z_normal);

/// Adds N(0, sigma_e^2) per bin and floors at 1.
Sinogram apply_electronic_noise(const Sinogram& counts, double sigma_e, std::uint64_t seed);

/// P = -ln(N / N0). Throws NumericError on nonpositive counts.
Sinogram counts_to_projection(const Sinogram& counts, double n0);

Sinogram intensity_from_projection(const Sinogram& projection);
Sinogram projection_from_intensity(const Sinogram& intensity);

}  // namespace dmar
