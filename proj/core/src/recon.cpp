#include "dmar/recon.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "dmar/error.hpp"

namespace dmar {

namespace {

// The FFTW planner is not re-entrant; execution on distinct buffers is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
    return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

struct Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;

    Plans(std::size_t n) {
        auto in = fftw_buffer<double>(n);
        auto out = fftw_buffer<fftw_complex>(n / 2 + 1);
        const std::lock_guard lock(planner_mutex());
        forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
        inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), out.get(), in.get(), FFTW_ESTIMATE);
    }
    ~Plans() {
        const std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(forward);
        fftw_destroy_plan(inverse);
    }
    Plans(const Plans&) = delete;
    Plans& operator=(const Plans&) = delete;
};

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

std::string_view filter_name(FilterKind f) { return f == FilterKind::RamLak ? "ram-lak" : "hann"; }

FilterKind parse_filter(std::string_view name) {
    if (name == "ram-lak") return FilterKind::RamLak;
    if (name == "hann" || name == "hann-windowed") return FilterKind::Hann;
    throw ParameterError("unknown reconstruction filter: " + std::string(name));
}

Sinogram ramp_filter(const Sinogram& sino, FilterKind kind, bool zero_pad) {
    sino.expect(SinogramUnit::LogProjection, "ramp_filter");
    const std::size_t nd = sino.n_detectors();
    const std::size_t n = zero_pad ? 2 * next_pow2(nd) : nd;
    const std::size_t nf = n / 2 + 1;
    const double ds = sino.geometry.detector_spacing_mm;

    // |f| in cycles/mm, with the 1/n of the inverse transform folded in.
    std::vector<double> response(nf);
    const double f_nyq = 0.5 / ds;
    for (std::size_t k = 0; k < nf; ++k) {
        const double f = static_cast<double>(k) / (static_cast<double>(n) * ds);
        double h = f;
        if (kind == FilterKind::Hann) h *= 0.5 * (1.0 + std::cos(std::numbers::pi * f / f_nyq));
        response[k] = h / static_cast<double>(n);
    }

    const Plans plans(n);
    Sinogram out(sino.geometry, SinogramUnit::Filtered);
#pragma omp parallel
    {
        auto row = fftw_buffer<double>(n);
        auto spec = fftw_buffer<fftw_complex>(nf);
#pragma omp for schedule(static)
        for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(sino.n_angles()); ++a) {
            const auto ua = static_cast<std::size_t>(a);
            std::fill(row.get(), row.get() + n, 0.0);
            for (std::size_t d = 0; d < nd; ++d) row[d] = sino(ua, d);
            fftw_execute_dft_r2c(plans.forward, row.get(), spec.get());
            for (std::size_t k = 0; k < nf; ++k) {
                spec[k][0] *= response[k];
                spec[k][1] *= response[k];
            }
            fftw_execute_dft_c2r(plans.inverse, spec.get(), row.get());
            for (std::size_t d = 0; d < nd; ++d) out(ua, d) = row[d];
        }
    }
    return out;
}

Image backproject(const Sinogram& filtered, const ReconParams& params) {
    filtered.expect(SinogramUnit::Filtered, "backproject");
    if (params.rows == 0 || params.cols == 0 || !(params.pixel_mm > 0.0))
        throw ParameterError("backproject: output dims and spacing must be positive");
    const auto& g = filtered.geometry;
    const std::size_t na = g.n_angles, nd = g.n_detectors;
    std::vector<double> cs(na), sn(na);
    for (std::size_t a = 0; a < na; ++a) {
        cs[a] = std::cos(g.angle(a));
        sn[a] = std::sin(g.angle(a));
    }
    const double cx = (static_cast<double>(params.cols) - 1.0) / 2.0;
    const double cy = (static_cast<double>(params.rows) - 1.0) / 2.0;
    const double centre = (static_cast<double>(nd) - 1.0) / 2.0;
    const double scale = params.pixel_mm / g.detector_spacing_mm;
    const double weight = std::numbers::pi / static_cast<double>(na);

    Image out(params.rows, params.cols, params.pixel_mm, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(params.rows); ++r) {
        const double y = (static_cast<double>(r) - cy) * scale;
        for (std::size_t c = 0; c < params.cols; ++c) {
            const double x = (static_cast<double>(c) - cx) * scale;
            double acc = 0.0;
            for (std::size_t a = 0; a < na; ++a) {
                const double u = x * cs[a] + y * sn[a] + centre;
                const double fu = std::floor(u);
                const auto i0 = static_cast<long>(fu);
                const double t = u - fu;
                const double* row = filtered.data.data() + a * nd;
                if (i0 >= 0 && i0 < static_cast<long>(nd)) acc += (1.0 - t) * row[i0];
                if (i0 + 1 >= 0 && i0 + 1 < static_cast<long>(nd)) acc += t * row[i0 + 1];
            }
            out(static_cast<std::size_t>(r), c) = acc * weight;
        }
    }
    return out;
}

Image fbp(const Sinogram& sino, const ReconParams& params) {
    return backproject(ramp_filter(sino, params.filter, params.zero_pad), params);
}

Image mu_to_hu(const Image& mu, double mu_water) {
    Image out = mu;
    for (auto& v : out.data) v = std::clamp(1000.0 * (v - mu_water) / mu_water, kHuMin, kHuMax);
    return out;
}

Image hu_to_mu(const Image& hu, double mu_water) {
    Image out = hu;
    for (auto& v : out.data) v = mu_water * (1.0 + v / 1000.0);
    return out;
}

}  // namespace dmar
