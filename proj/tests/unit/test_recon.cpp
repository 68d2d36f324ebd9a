#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dmar/error.hpp"
#include "dmar/recon.hpp"
#include "helpers.hpp"

using namespace dmar;

namespace {

Sinogram random_sino(const ProjectionGeometry& g, std::uint64_t seed) {
    Sinogram s(g, SinogramUnit::LogProjection);
    SeqRng rng(seed);
    for (auto& v : s.data) v = rng.uniform(0.0, 3.0);
    return s;
}

// Analytic parallel-beam sinogram of a centred uniform disk.
Sinogram disk_sino(const ProjectionGeometry& g, double r, double mu) {
    Sinogram s(g, SinogramUnit::LogProjection);
    for (std::size_t a = 0; a < g.n_angles; ++a)
        for (std::size_t d = 0; d < g.n_detectors; ++d) {
            const double off = g.detector_offset(d);
            s(a, d) = std::abs(off) < r ? 2.0 * mu * std::sqrt(r * r - off * off) : 0.0;
        }
    return s;
}

ReconParams params(std::size_t n, double pixel) {
    ReconParams p;
    p.rows = p.cols = n;
    p.pixel_mm = pixel;
    return p;
}

}  // namespace

TEST_CASE("filter names") {
    CHECK(parse_filter("ram-lak") == FilterKind::RamLak);
    CHECK(parse_filter(filter_name(FilterKind::Hann)) == FilterKind::Hann);
    CHECK_THROWS_AS(parse_filter("shepp"), ParameterError);
}

TEST_CASE("ramp filter of zero is zero") {
    const ProjectionGeometry g{8, 32, 0.5, 0.5};
    const Sinogram f = ramp_filter(Sinogram(g, SinogramUnit::LogProjection), FilterKind::RamLak);
    CHECK(f.unit == SinogramUnit::Filtered);
    CHECK(std::all_of(f.data.begin(), f.data.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("periodic ramp filter removes a constant row") {
    const ProjectionGeometry g{4, 64, 0.5, 0.5};
    const Sinogram s(g, SinogramUnit::LogProjection, 7.0);
    for (auto k : {FilterKind::RamLak, FilterKind::Hann}) {
        const Sinogram f = ramp_filter(s, k, false);
        for (double v : f.data) CHECK(std::abs(v) < 1e-6 * 7.0);
    }
}

TEST_CASE("ramp filter is linear") {
    const ProjectionGeometry g{10, 50, 0.5, 0.5};
    const Sinogram a = random_sino(g, 1), b = random_sino(g, 2);
    Sinogram ab = a;
    for (std::size_t i = 0; i < ab.data.size(); ++i) ab.data[i] += b.data[i];
    for (auto k : {FilterKind::RamLak, FilterKind::Hann})
        for (bool pad : {true, false}) {
            const Sinogram fa = ramp_filter(a, k, pad), fb = ramp_filter(b, k, pad), fab = ramp_filter(ab, k, pad);
            double worst = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < fab.data.size(); ++i) {
                worst = std::max(worst, std::abs(fab.data[i] - fa.data[i] - fb.data[i]));
                scale = std::max(scale, std::abs(fab.data[i]));
            }
            CHECK(worst <= 1e-9 * scale);
        }
}

TEST_CASE("wrong unit tags throw") {
    const ProjectionGeometry g{4, 16, 0.5, 0.5};
    CHECK_THROWS_AS(ramp_filter(Sinogram(g, SinogramUnit::Counts), FilterKind::RamLak), UnitError);
    CHECK_THROWS_AS(backproject(Sinogram(g, SinogramUnit::LogProjection), params(8, 0.5)), UnitError);
    CHECK_THROWS_AS(fbp(Sinogram(g, SinogramUnit::PathLength), params(8, 0.5)), UnitError);
}

TEST_CASE("zero input gives a zero image") {
    const ProjectionGeometry g{16, 24, 0.5, 0.5};
    const Image img = backproject(Sinogram(g, SinogramUnit::Filtered), params(12, 0.5));
    CHECK(std::all_of(img.data.begin(), img.data.end(), [](double v) { return v == 0.0; }));
    const Image f = fbp(Sinogram(g, SinogramUnit::LogProjection), params(12, 0.5));
    CHECK(std::all_of(f.data.begin(), f.data.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("disk oracle: analytic chord sinogram reconstructs within 5%") {
    const std::size_t n = 256;
    const double pixel = 0.25, r = 20.0, mu = 0.02;
    const auto g = ProjectionGeometry::covering(n, n, pixel, 360);
    const Sinogram s = disk_sino(g, r, mu);
    for (auto k : {FilterKind::RamLak, FilterKind::Hann}) {
        ReconParams p = params(n, pixel);
        p.filter = k;
        const Image img = fbp(s, p);
        const double c = (n - 1) / 2.0;
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x)
                if (std::hypot((x - c) * pixel, (y - c) * pixel) < r / 2) sum += img(y, x), ++cnt;
        const double mean = sum / cnt;
        CHECK(mean >= 0.019);
        CHECK(mean <= 0.021);
    }
}

TEST_CASE("half-turn of the angle axis rotates the image by 90 degrees") {
    const std::size_t n = 64;
    const double pixel = 0.5;
    Image f(n, n, pixel, 0.0);
    // Asymmetric blob pair.
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double dx = x - 24.0, dy = y - 30.0, ex = x - 40.0, ey = y - 38.0;
            f(y, x) = std::exp(-(dx * dx + dy * dy) / 30.0) + 0.5 * std::exp(-(ex * ex + ey * ey) / 12.0);
        }
    const auto g = ProjectionGeometry::covering(n, n, pixel, 360);
    const Sinogram s = project(f, g);
    Sinogram rot = s;
    rot.unit = SinogramUnit::LogProjection;
    const std::size_t half = g.n_angles / 2, nd = g.n_detectors;
    for (std::size_t a = 0; a < g.n_angles; ++a)
        for (std::size_t d = 0; d < nd; ++d)
            rot(a, d) = a + half < g.n_angles ? s(a + half, d) : s(a - half, nd - 1 - d);
    Sinogram src = s;
    src.unit = SinogramUnit::LogProjection;
    const Image a = fbp(src, params(n, pixel)), b = fbp(rot, params(n, pixel));
    // Compare b with a rotated either way; covariance holds for one of them.
    auto rms = [&](bool clockwise) {
        double e = 0.0, ref = 0.0;
        for (std::size_t y = 8; y < n - 8; ++y)
            for (std::size_t x = 8; x < n - 8; ++x) {
                const double va = clockwise ? a(n - 1 - x, y) : a(x, n - 1 - y);
                e += (b(y, x) - va) * (b(y, x) - va);
                ref += va * va;
            }
        return std::sqrt(e / ref);
    };
    CHECK(std::min(rms(true), rms(false)) < 0.02);
}

TEST_CASE("fbp is linear and deterministic") {
    const ProjectionGeometry g = ProjectionGeometry::covering(32, 32, 0.5, 60);
    const Sinogram a = random_sino(g, 3), b = random_sino(g, 4);
    Sinogram ab = a;
    for (std::size_t i = 0; i < ab.data.size(); ++i) ab.data[i] = 2.0 * a.data[i] + b.data[i];
    const auto p = params(32, 0.5);
    const Image fa = fbp(a, p), fb = fbp(b, p), fab = fbp(ab, p);
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < fab.size(); ++i) {
        worst = std::max(worst, std::abs(fab.data[i] - 2.0 * fa.data[i] - fb.data[i]));
        scale = std::max(scale, std::abs(fab.data[i]));
    }
    CHECK(worst <= 1e-9 * scale);
    CHECK(fbp(a, p) == fa);
}

TEST_CASE("HU conversion") {
    Image mu(1, 4, 1.0);
    const double w = 0.02;
    mu.data = {w, 0.0, 2.0 * w, 1e3};
    const Image hu = mu_to_hu(mu, w);
    CHECK(hu.data[0] == 0.0);
    CHECK(hu.data[1] == -1000.0);
    CHECK(hu.data[2] == doctest::Approx(1000.0));
    CHECK(hu.data[3] == kHuMax);
    mu.data[1] = -0.01;
    CHECK(mu_to_hu(mu, w).data[1] == kHuMin);
    const Image round = hu_to_mu(mu_to_hu(testing::random_image(8, 8, 5, 0.0, 0.05), w), w);
    CHECK(testing::max_abs_diff(round.data, testing::random_image(8, 8, 5, 0.0, 0.05).data) < 1e-15);
}
