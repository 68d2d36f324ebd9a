#include <cmath>

#include "doctest.h"
#include "dmar/baselines.hpp"
#include "dmar/error.hpp"
#include "helpers.hpp"

using namespace dmar;

namespace {

MetalTrace make_trace(const ProjectionGeometry& g, const std::vector<std::pair<std::size_t, std::size_t>>& bins) {
    MetalTrace t{g, std::vector<std::uint8_t>(g.n_angles * g.n_detectors, 0)};
    for (auto [a, d] : bins) t.mask[a * g.n_detectors + d] = 1;
    return t;
}

Sinogram random_sino(const ProjectionGeometry& g, std::uint64_t seed, double lo = 0.5, double hi = 3.0) {
    Sinogram s(g, SinogramUnit::LogProjection);
    SeqRng rng(seed);
    for (auto& v : s.data) v = rng.uniform(lo, hi);
    return s;
}

MetalTrace random_trace(const ProjectionGeometry& g, std::uint64_t seed, double p = 0.2) {
    MetalTrace t{g, std::vector<std::uint8_t>(g.n_angles * g.n_detectors, 0)};
    SeqRng rng(seed);
    for (auto& v : t.mask) v = rng.uniform() < p;
    return t;
}

}  // namespace

TEST_CASE("li interpolates a masked run") {
    const ProjectionGeometry g{1, 4, 1.0, 0.5};
    Sinogram s(g, SinogramUnit::LogProjection);
    s.data = {1.0, 99.0, -5.0, 4.0};
    const Sinogram out = li_correct(s, make_trace(g, {{0, 1}, {0, 2}}));
    CHECK(out.data[0] == 1.0);
    CHECK(out.data[1] == doctest::Approx(2.0));
    CHECK(out.data[2] == doctest::Approx(3.0));
    CHECK(out.data[3] == 4.0);
}

TEST_CASE("li reproduces linear rows") {
    const ProjectionGeometry g{5, 30, 1.0, 0.5};
    Sinogram s(g, SinogramUnit::LogProjection);
    for (std::size_t a = 0; a < 5; ++a)
        for (std::size_t d = 0; d < 30; ++d) s(a, d) = 0.3 * a + 0.17 * d - 1.0;
    const MetalTrace t = make_trace(g, {{0, 5}, {0, 6}, {1, 10}, {2, 11}, {2, 12}, {2, 13}, {4, 28}});
    const Sinogram out = li_correct(s, t);
    CHECK(testing::max_abs_diff(out.data, s.data) < 1e-12);
}

TEST_CASE("one-sided runs copy their neighbour, full rows take the mean with a warning") {
    const ProjectionGeometry g{2, 5, 1.0, 0.5};
    Sinogram s(g, SinogramUnit::LogProjection);
    s.data = {9.0, 8.0, 3.0, 4.0, 7.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    const MetalTrace t = make_trace(g, {{0, 0}, {0, 1}, {0, 4}, {1, 0}, {1, 1}, {1, 2}, {1, 3}, {1, 4}});
    MarDiagnostics diag;
    const Sinogram out = li_correct(s, t, &diag);
    CHECK(out(0, 0) == 3.0);
    CHECK(out(0, 1) == 3.0);
    CHECK(out(0, 4) == 4.0);
    for (std::size_t d = 0; d < 5; ++d) CHECK(out(1, d) == doctest::Approx(3.0));
    CHECK(diag.full_rows == 1);
    CHECK(diag.warnings.size() == 1);
}

TEST_CASE("empty trace leaves the sinogram bit-exact") {
    const ProjectionGeometry g{6, 20, 1.0, 0.5};
    const Sinogram s = random_sino(g, 1);
    const MetalTrace t = make_trace(g, {});
    CHECK(li_correct(s, t).data == s.data);
    CHECK(nmar_with_prior(s, t, random_sino(g, 2), 1e-3).data == s.data);
}

TEST_CASE("neither method touches bins outside the trace") {
    const ProjectionGeometry g{20, 40, 1.0, 0.5};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Sinogram s = random_sino(g, seed), prior = random_sino(g, seed + 100);
        const MetalTrace t = random_trace(g, seed);
        const Sinogram li = li_correct(s, t), nm = nmar_with_prior(s, t, prior, 1e-3);
        for (std::size_t i = 0; i < s.data.size(); ++i)
            if (!t.mask[i]) {
                CHECK(li.data[i] == s.data[i]);
                CHECK(nm.data[i] == s.data[i]);
            }
    }
}

TEST_CASE("nmar with a constant prior equals li") {
    const ProjectionGeometry g{12, 30, 1.0, 0.5};
    const Sinogram s = random_sino(g, 5);
    const MetalTrace t = random_trace(g, 6, 0.3);
    // A power of two makes the normalisation exact in floating point.
    const Sinogram two(g, SinogramUnit::LogProjection, 2.0);
    CHECK(nmar_with_prior(s, t, two, 1e-3).data == li_correct(s, t).data);
    const Sinogram other(g, SinogramUnit::LogProjection, 0.37);
    CHECK(testing::max_abs_diff(nmar_with_prior(s, t, other, 1e-3).data, li_correct(s, t).data) < 1e-12);
}

TEST_CASE("nmar returns the prior when the data equal it") {
    const ProjectionGeometry g{10, 25, 1.0, 0.5};
    const Sinogram prior = random_sino(g, 7);
    const MetalTrace t = random_trace(g, 8, 0.3);
    const Sinogram out = nmar_with_prior(prior, t, prior, 1e-3);
    CHECK(testing::max_abs_diff(out.data, prior.data) < 1e-12);
}

TEST_CASE("weak prior anchors fall back to li with a flag") {
    const ProjectionGeometry g{1, 6, 1.0, 0.5};
    Sinogram s(g, SinogramUnit::LogProjection);
    s.data = {1.0, 2.0, 50.0, 50.0, 5.0, 6.0};
    Sinogram prior(g, SinogramUnit::LogProjection, 1.0);
    prior.data[1] = 0.0;
    MarDiagnostics diag;
    const MetalTrace t = make_trace(g, {{0, 2}, {0, 3}});
    const Sinogram out = nmar_with_prior(s, t, prior, 1e-3, &diag);
    CHECK(out.data == li_correct(s, t).data);
    CHECK(diag.prior_fallbacks == 1);
    CHECK_FALSE(diag.warnings.empty());
}

TEST_CASE("prior classes") {
    Image hu(1, 8, 1.0);
    // air, tissue x2, bone x2, metal remnant, bone, tissue
    hu.data = {-900.0, 0.0, 100.0, 500.0, 1500.0, 6000.0, 1000.0, -200.0};
    NmarParams p;
    p.mu_water = 0.02;
    auto mu = [&](double h) { return p.mu_water * (1.0 + h / 1000.0); };
    const double tissue = (mu(0.0) + mu(100.0) + mu(-200.0)) / 3.0;
    const double bone = (mu(500.0) + mu(1500.0) + mu(1000.0)) / 3.0;
    const Image prior = nmar_prior(hu, p);
    const std::vector<double> expected{0.0, tissue, tissue, bone, bone, tissue, bone, tissue};
    CHECK(testing::max_abs_diff(prior.data, expected) < 1e-15);

    // Pixels above bone_hi in the uncorrected image join the bone class.
    Image raw = hu;
    raw.data[2] = 8000.0;
    raw.data[5] = 0.0;
    const Image hinted = nmar_prior(hu, p, &raw);
    CHECK(hinted.data[2] == doctest::Approx(bone));
    CHECK(hinted.data[5] == doctest::Approx(tissue));

    NmarParams bad = p;
    bad.mu_water = 0.0;
    CHECK_THROWS_AS(nmar_prior(hu, bad), ParameterError);
}

TEST_CASE("metal trace geometry") {
    const std::size_t n = 40;
    const double pixel = 0.5;
    const auto g = ProjectionGeometry::covering(n, n, pixel, 36);
    Mask2 none(n, n, pixel, 0);
    CHECK(metal_trace(none, pixel, g).count() == 0);

    Mask2 dot(n, n, pixel, 0);
    dot(17, 23) = 1;
    const MetalTrace t = metal_trace(dot, pixel, g);
    for (std::size_t a = 0; a < g.n_angles; ++a) {
        std::size_t row = 0;
        for (std::size_t d = 0; d < g.n_detectors; ++d) row += t(a, d);
        CHECK(row >= 1);
    }

    // A bar covers at least its projected extent at every angle.
    Mask2 bar(n, n, pixel, 0);
    for (std::size_t x = 10; x < 30; ++x) bar(20, x) = 1;
    const MetalTrace tb = metal_trace(bar, pixel, g);
    const double c = (n - 1) / 2.0;
    for (std::size_t a = 0; a < g.n_angles; ++a) {
        const double th = g.angle(a);
        double lo = 1e9, hi = -1e9;
        for (std::size_t x = 10; x < 30; ++x) {
            const double s = (x - c) * pixel * std::cos(th) + (20 - c) * pixel * std::sin(th);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        std::size_t first = g.n_detectors, last = 0;
        for (std::size_t d = 0; d < g.n_detectors; ++d)
            if (tb(a, d)) first = std::min(first, d), last = std::max(last, d);
        REQUIRE(first <= last);
        CHECK((last - first + 1) * g.detector_spacing_mm >= hi - lo);
    }
}

TEST_CASE("trace geometry mismatch and wrong units throw") {
    const ProjectionGeometry g{4, 10, 1.0, 0.5}, h{4, 12, 1.0, 0.5};
    CHECK_THROWS_AS(li_correct(Sinogram(g, SinogramUnit::LogProjection), make_trace(h, {})), ShapeError);
    CHECK_THROWS_AS(li_correct(Sinogram(g, SinogramUnit::Counts), make_trace(g, {})), UnitError);
}

TEST_CASE("method names") {
    CHECK(parse_mar_method("li") == MarMethod::Li);
    CHECK(parse_mar_method(mar_method_name(MarMethod::Nmar)) == MarMethod::Nmar);
    CHECK_THROWS_AS(parse_mar_method("fancy"), ParameterError);
}

TEST_CASE("mar_reconstruct with an empty trace is plain fbp for every method") {
    const std::size_t n = 32;
    const auto g = ProjectionGeometry::covering(n, n, 0.5, 40);
    const Sinogram s = random_sino(g, 12, 0.0, 0.2);
    ReconParams rp;
    rp.rows = rp.cols = n;
    rp.pixel_mm = 0.5;
    NmarParams np;
    np.mu_water = 0.02;
    const MetalTrace t = make_trace(g, {});
    const Image plain = mu_to_hu(fbp(s, rp), np.mu_water);
    for (auto m : {MarMethod::None, MarMethod::Li, MarMethod::Nmar}) CHECK(mar_reconstruct(s, t, m, rp, np) == plain);
}
