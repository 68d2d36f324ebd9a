#include <benchmark/benchmark.h>

#include "dmar/autodiff.hpp"
#include "dmar/dmp_former.hpp"
#include "dmar/gradcheck_suite.hpp"
#include "dmar/physics_model.hpp"
#include "dmar/projector.hpp"
#include "dmar/recon.hpp"
#include "dmar/rng.hpp"

using namespace dmar;

namespace {

Image disk(std::size_t n) {
    Image img(n, n, 0.5);
    const double c = (static_cast<double>(n) - 1.0) / 2.0, r = 0.35 * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if ((i - c) * (i - c) + (j - c) * (j - c) < r * r) img(i, j) = 0.02;
    return img;
}

void BM_Project(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const Image img = disk(n);
    const auto g = ProjectionGeometry::covering(n, n, 0.5, 180);
    for (auto _ : st) benchmark::DoNotOptimize(project(img, g));
}
BENCHMARK(BM_Project)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Polychromatic(benchmark::State& st) {
    const Image img = disk(128);
    const auto g = ProjectionGeometry::covering(128, 128, 0.5, 180);
    const Sinogram p = project(img, g);
    const std::array<Sinogram, 3> paths{p, p, Sinogram(g, SinogramUnit::PathLength, 0.0)};
    const EnergySpectrum spec = build_spectrum(SpectrumParams{});
    for (auto _ : st) benchmark::DoNotOptimize(polychromatic_project(paths, spec));
}
BENCHMARK(BM_Polychromatic)->Unit(benchmark::kMillisecond);

void BM_Fbp(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto g = ProjectionGeometry::covering(n, n, 0.5, 180);
    Sinogram s = project(disk(n), g);
    s.unit = SinogramUnit::LogProjection;  // the field is already mu
    ReconParams r;
    r.rows = r.cols = n;
    for (auto _ : st) benchmark::DoNotOptimize(fbp(s, r));
}
BENCHMARK(BM_Fbp)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

struct DmpFixture {
    DmpConfig cfg;
    DmpParams<float> params = cast_params<float>(randomized_params(cfg, 1, 0.02));
    ad::Tensor<float> y, edge;

    DmpFixture() {
        Image img(cfg.side, cfg.side, 1.0);
        SeqRng rng(2);
        for (auto& v : img.data) v = rng.uniform(-1000.0, 2000.0);
        y = to_network<float>(img);
        edge = mask_to_network<float>(Mask2(cfg.side, cfg.side, 1.0, 0));
    }
};

void BM_DmpForward(benchmark::State& st) {
    const DmpFixture f;
    for (auto _ : st) benchmark::DoNotOptimize(dmp_predict(f.params, f.y, f.edge, f.cfg));
}
BENCHMARK(BM_DmpForward)->Unit(benchmark::kMillisecond);

void BM_DmpForwardBackward(benchmark::State& st) {
    const DmpFixture f;
    for (auto _ : st) {
        ad::Graph<float> g;
        const DmpVars p = bind_params(g, f.params, true);
        const auto out = dmp_forward(g, g.constant(f.y), g.constant(f.edge), p, f.cfg);
        g.backward(ad::sum(g, out.x_pred));
        benchmark::ClobberMemory();
    }
}
BENCHMARK(BM_DmpForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
