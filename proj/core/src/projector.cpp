#include "dmar/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dmar/error.hpp"
#include "dmar/rng.hpp"

namespace dmar {

double ProjectionGeometry::angle(std::size_t i) const {
    return std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_angles);
}

double ProjectionGeometry::detector_offset(std::size_t d) const {
    return (static_cast<double>(d) - (static_cast<double>(n_detectors) - 1.0) / 2.0) * detector_spacing_mm;
}

void ProjectionGeometry::check_covers(std::size_t rows, std::size_t cols, double pixel_mm) const {
    if (n_angles < 1 || n_detectors < 1 || !(detector_spacing_mm > 0.0) || !(step_fraction > 0.0))
        throw ParameterError("projection geometry: counts and spacings must be positive");
    const double diag = std::hypot(static_cast<double>(rows - 1), static_cast<double>(cols - 1)) * pixel_mm;
    if (static_cast<double>(n_detectors - 1) * detector_spacing_mm + 1e-9 < diag)
        throw ParameterError("projection geometry: detector row (" + std::to_string(n_detectors) +
                             " bins) does not span the image diagonal");
}

ProjectionGeometry ProjectionGeometry::covering(std::size_t rows, std::size_t cols, double pixel_mm,
                                                std::size_t n_angles) {
    ProjectionGeometry g;
    g.n_angles = n_angles;
    g.detector_spacing_mm = pixel_mm;
    const double diag = std::hypot(static_cast<double>(rows - 1), static_cast<double>(cols - 1));
    g.n_detectors = static_cast<std::size_t>(std::ceil(diag)) + 3;
    // Odd/even parity of the image keeps the centre ray on a pixel centre.
    if ((g.n_detectors % 2) != (cols % 2)) ++g.n_detectors;
    return g;
}

std::string_view unit_name(SinogramUnit u) {
    switch (u) {
        case SinogramUnit::PathLength: return "path-length-mm";
        case SinogramUnit::LogProjection: return "log-projection";
        case SinogramUnit::Counts: return "counts";
        case SinogramUnit::Intensity: return "intensity";
        case SinogramUnit::Filtered: return "filtered";
    }
    return "log-projection";
}

SinogramUnit parse_unit(std::string_view name) {
    for (auto u : {SinogramUnit::PathLength, SinogramUnit::LogProjection, SinogramUnit::Counts,
                   SinogramUnit::Intensity, SinogramUnit::Filtered})
        if (unit_name(u) == name) return u;
    throw ParameterError("unknown sinogram unit: " + std::string(name));
}

void Sinogram::expect(SinogramUnit u, std::string_view op) const {
    if (unit != u)
        throw UnitError(std::string(op) + ": expected a " + std::string(unit_name(u)) + " sinogram, got " +
                        std::string(unit_name(unit)));
}

void NoiseParams::validate() const {
    if (!(n0 > 0.0)) throw ParameterError("noise.n0 must be positive");
    if (!(n_min >= 1.0)) throw ParameterError("noise.n_min must be >= 1");
    if (!(spr >= 0.0)) throw ParameterError("noise.spr must be >= 0");
    if (!(sigma_scatter_px > 0.0)) throw ParameterError("noise.sigma_scatter_px must be positive");
    if (!(sigma_e >= 0.0)) throw ParameterError("noise.sigma_e must be >= 0");
}

// ---------------------------------------------------------------------------

Sinogram project(const Image& field, const ProjectionGeometry& geom) {
    geom.check_covers(field.rows, field.cols, field.spacing_mm);
    Sinogram out(geom, SinogramUnit::PathLength, 0.0);
    if (std::all_of(field.data.begin(), field.data.end(), [](double v) { return v == 0.0; })) return out;

    const double pix = field.spacing_mm;
    const double cx = (static_cast<double>(field.cols) - 1.0) / 2.0;
    const double cy = (static_cast<double>(field.rows) - 1.0) / 2.0;
    const double step_px = geom.step_fraction;
    const double radius_px = std::hypot(cx + 1.0, cy + 1.0);
    const auto rows = static_cast<long>(field.rows);
    const auto cols = static_cast<long>(field.cols);

    auto sample = [&](double c, double r) {
        const double fc = std::floor(c), fr = std::floor(r);
        const long c0 = static_cast<long>(fc), r0 = static_cast<long>(fr);
        const double tc = c - fc, tr = r - fr;
        double v = 0.0;
        for (int dr = 0; dr < 2; ++dr) {
            const long rr = r0 + dr;
            if (rr < 0 || rr >= rows) continue;
            const double wr = dr ? tr : 1.0 - tr;
            for (int dc = 0; dc < 2; ++dc) {
                const long cc = c0 + dc;
                if (cc < 0 || cc >= cols) continue;
                v += wr * (dc ? tc : 1.0 - tc) * field.data[static_cast<std::size_t>(rr * cols + cc)];
            }
        }
        return v;
    };

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ia = 0; ia < static_cast<std::ptrdiff_t>(geom.n_angles); ++ia) {
        const double theta = geom.angle(static_cast<std::size_t>(ia));
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t d = 0; d < geom.n_detectors; ++d) {
            const double s_px = geom.detector_offset(d) / pix;
            if (std::abs(s_px) >= radius_px) continue;
            const double half = std::sqrt(radius_px * radius_px - s_px * s_px);
            const auto n_steps = static_cast<long>(std::ceil(2.0 * half / step_px));
            const double t0 = -0.5 * static_cast<double>(n_steps) * step_px;
            double acc = 0.0;
            for (long k = 0; k < n_steps; ++k) {
                const double t = t0 + (static_cast<double>(k) + 0.5) * step_px;
                const double x = s_px * ct - t * st;
                const double y = s_px * st + t * ct;
                acc += sample(x + cx, y + cy);
            }
            out(static_cast<std::size_t>(ia), d) = acc * step_px * pix;
        }
    }
    return out;
}

std::array<Sinogram, 3> path_lengths(const MaterialSlice& map, const ProjectionGeometry& geom) {
    for (const auto& f : map.fields)
        if (!f.same_shape(map.fields[0])) throw ShapeError("path_lengths: material fields differ in shape");
    return {project(map.fields[0], geom), project(map.fields[1], geom), project(map.fields[2], geom)};
}

namespace {

void check_paths(const std::array<Sinogram, 3>& paths, std::string_view op) {
    for (const auto& p : paths) {
        p.expect(SinogramUnit::PathLength, op);
        if (!(p.geometry == paths[0].geometry)) throw ShapeError(std::string(op) + ": path geometries differ");
        for (double v : p.data)
            if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite path length");
    }
}

}  // namespace

Sinogram polychromatic_project(const std::array<Sinogram, 3>& paths, const EnergySpectrum& spectrum,
                               const MaterialTable& table) {
    check_paths(paths, "polychromatic_project");
    const std::size_t nb = spectrum.size();
    std::vector<double> log_w(nb);
    std::vector<std::array<double, 3>> mu(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        log_w[i] = std::log(spectrum.weights[i]);
        for (std::size_t m = 0; m < 3; ++m)
            mu[i][m] = attenuation_mu(kPhantomMaterials[m], spectrum.energies_kev[i], table);
    }
    Sinogram out(paths[0].geometry, SinogramUnit::LogProjection, 0.0);
    const std::size_t n = out.data.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
        const auto k = static_cast<std::size_t>(j);
        // -log-sum-exp over bins; exact for a single bin.
        double best = -1e300;
        for (std::size_t i = 0; i < nb; ++i) {
            if (spectrum.weights[i] <= 0.0) continue;
            const double e = log_w[i] - (paths[0].data[k] * mu[i][0] + paths[1].data[k] * mu[i][1] +
                                         paths[2].data[k] * mu[i][2]);
            best = std::max(best, e);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < nb; ++i) {
            if (spectrum.weights[i] <= 0.0) continue;
            const double e = log_w[i] - (paths[0].data[k] * mu[i][0] + paths[1].data[k] * mu[i][1] +
                                         paths[2].data[k] * mu[i][2]);
            acc += std::exp(e - best);
        }
        out.data[k] = -(best + std::log(acc));
    }
    return out;
}

Sinogram monochromatic_project(const std::array<Sinogram, 3>& paths, double energy_kev, const MaterialTable& table) {
    check_paths(paths, "monochromatic_project");
    std::array<double, 3> mu{};
    for (std::size_t m = 0; m < 3; ++m) mu[m] = attenuation_mu(kPhantomMaterials[m], energy_kev, table);
    Sinogram out(paths[0].geometry, SinogramUnit::LogProjection, 0.0);
    for (std::size_t k = 0; k < out.data.size(); ++k)
        out.data[k] = mu[0] * paths[0].data[k] + mu[1] * paths[1].data[k] + mu[2] * paths[2].data[k];
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> scatter_kernel_1d(double sigma_px) {
    if (!(sigma_px > 0.0)) throw ParameterError("scatter kernel sigma must be positive");
    const auto radius = static_cast<long>(std::ceil(4.0 * sigma_px));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (long i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma_px * sigma_px));
        k[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : k) v /= total;
    return k;
}

namespace {

// Symmetric reflection (d c b a | a b c d | d c b a), any offset.
std::size_t reflect_index(long i, long n) {
    const long period = 2 * n;
    long m = i % period;
    if (m < 0) m += period;
    return static_cast<std::size_t>(m < n ? m : period - 1 - m);
}

}  // namespace

Sinogram apply_scatter(const Sinogram& primary, const NoiseParams& params) {
    primary.expect(SinogramUnit::Intensity, "apply_scatter");
    if (params.spr == 0.0) return primary;
    for (double v : primary.data)
        if (!(v >= 0.0)) throw ParameterError("apply_scatter: intensity must be nonnegative");

    const auto kernel = scatter_kernel_1d(params.sigma_scatter_px);
    const long radius = static_cast<long>(kernel.size() / 2);
    const auto na = static_cast<long>(primary.n_angles());
    const auto nd = static_cast<long>(primary.n_detectors());

    // Separable blur: detectors, then angles.
    std::vector<double> tmp(primary.data.size());
#pragma omp parallel for schedule(static)
    for (long a = 0; a < na; ++a)
        for (long d = 0; d < nd; ++d) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       primary.data[static_cast<std::size_t>(a * nd) + reflect_index(d + k, nd)];
            tmp[static_cast<std::size_t>(a * nd + d)] = acc;
        }
    Sinogram out(primary.geometry, SinogramUnit::Intensity);
#pragma omp parallel for schedule(static)
    for (long a = 0; a < na; ++a)
        for (long d = 0; d < nd; ++d) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k)
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp[reflect_index(a + k, na) * static_cast<std::size_t>(nd) + static_cast<std::size_t>(d)];
            const auto idx = static_cast<std::size_t>(a * nd + d);
            out.data[idx] = primary.data[idx] + params.spr * acc;
        }
    return out;
}

double sample_poisson(double mean, double u, double z) {
    if (mean <= 0.0) return 0.0;
    if (mean < 50.0) {
        double p = std::exp(-mean);
        double cdf = p;
        double k = 0.0;
        while (u > cdf && k < 1000.0) {
            k += 1.0;
            p *= mean / k;
            cdf += p;
        }
        return k;
    }
    return std::max(0.0, std::round(mean + std::sqrt(mean) * z));
}

Sinogram apply_photon_noise(const Sinogram& projection, const NoiseParams& params, std::uint64_t seed) {
    projection.expect(SinogramUnit::LogProjection, "apply_photon_noise");
    params.validate();
    for (double p : projection.data)
        if (!std::isfinite(p)) throw NumericError("apply_photon_noise: non-finite projection");
    const CounterRng rng(seed, 0x50495353ULL);
    Sinogram out(projection.geometry, SinogramUnit::Counts);
    const std::size_t nd = projection.n_detectors();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(projection.n_angles()); ++a)
        for (std::size_t d = 0; d < nd; ++d) {
            const auto ua = static_cast<std::size_t>(a);
            const double p = projection(ua, d);
            const double mean = params.n0 * std::exp(-p);
            const double n = mean < 50.0 ? sample_poisson(mean, rng.uniform(ua, d, 0), 0.0)
                                         : sample_poisson(mean, 0.0, rng.normal(ua, d, 1));
            out(ua, d) = std::max(n, params.n_min);
        }
    return out;
}

Sinogram apply_electronic_noise(const Sinogram& counts, double sigma_e, std::uint64_t seed) {
    counts.expect(SinogramUnit::Counts, "apply_electronic_noise");
    if (sigma_e == 0.0) return counts;
    const CounterRng rng(seed, 0x454C4543ULL);
    Sinogram out(counts.geometry, SinogramUnit::Counts);
    const std::size_t nd = counts.n_detectors();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(counts.n_angles()); ++a)
        for (std::size_t d = 0; d < nd; ++d) {
            const auto ua = static_cast<std::size_t>(a);
            out(ua, d) = std::max(1.0, counts(ua, d) + sigma_e * rng.normal(ua, d));
        }
    return out;
}

Sinogram counts_to_projection(const Sinogram& counts, double n0) {
    counts.expect(SinogramUnit::Counts, "counts_to_projection");
    if (!(n0 > 0.0)) throw ParameterError("counts_to_projection: n0 must be positive");
    Sinogram out(counts.geometry, SinogramUnit::LogProjection);
    for (std::size_t k = 0; k < counts.data.size(); ++k) {
        if (!(counts.data[k] > 0.0)) throw NumericError("counts_to_projection: nonpositive count");
        out.data[k] = -std::log(counts.data[k] / n0);
    }
    return out;
}

Sinogram intensity_from_projection(const Sinogram& projection) {
    projection.expect(SinogramUnit::LogProjection, "intensity_from_projection");
    Sinogram out(projection.geometry, SinogramUnit::Intensity);
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = std::exp(-projection.data[k]);
    return out;
}

Sinogram projection_from_intensity(const Sinogram& intensity) {
    intensity.expect(SinogramUnit::Intensity, "projection_from_intensity");
    Sinogram out(intensity.geometry, SinogramUnit::LogProjection);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        if (!(intensity.data[k] > 0.0)) throw NumericError("projection_from_intensity: nonpositive intensity");
        out.data[k] = -std::log(intensity.data[k]);
    }
    return out;
}

}  // namespace dmar
