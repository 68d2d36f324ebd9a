#include "dmar/gradcheck_suite.hpp"

#include <cmath>
#include <functional>

#include "dmar/rng.hpp"
#include "dmar/ssa_losses.hpp"

namespace dmar {

using ad::Graph;
using ad::GradcheckOptions;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor<double> random_tensor(Shape s, SeqRng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Scalar probe: sum(out * W) with a fixed random W of the output's shape.
Var probe(Graph<double>& g, Var out, std::uint64_t seed) {
    SeqRng rng(seed);
    return ad::sum(g, ad::mul(g, out, g.constant(random_tensor(g.shape(out), rng))));
}

using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

struct Probe {
    std::string name;
    std::vector<std::vector<Shape>> shapes;  // input shapes per trial
    Builder fn;
    double lo = -1.0, hi = 1.0;
};

std::vector<std::array<double, 2>> positions_for(std::size_t n) {
    std::vector<std::array<double, 2>> p;
    for (std::size_t i = 0; i < n; ++i) p.push_back({static_cast<double>(i / 3), static_cast<double>(i % 3)});
    return p;
}

std::vector<Probe> primitive_probes() {
    std::vector<Probe> ps;
    ps.push_back({"matmul", {{{3, 4}, {4, 2}}, {{1, 5}, {5, 3}}, {{4, 4}, {4, 1}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::matmul(g, x[0], x[1]); }});
    ps.push_back({"add", {{{3, 4}, {3, 4}}, {{7}, {7}}, {{2, 2, 3}, {2, 2, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::add(g, x[0], x[1]); }});
    ps.push_back({"sub", {{{3, 4}, {3, 4}}, {{5}, {5}}, {{2, 3, 2}, {2, 3, 2}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::sub(g, x[0], x[1]); }});
    ps.push_back({"mul", {{{3, 4}, {3, 4}}, {{6}, {6}}, {{2, 2, 2, 2}, {2, 2, 2, 2}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::mul(g, x[0], x[1]); }});
    ps.push_back({"mul_shared", {{{4}}, {{2, 3}}, {{3, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::mul(g, x[0], x[0]); }});
    ps.push_back({"scale", {{{3, 4}}, {{5}}, {{2, 3, 4}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::scale(g, x[0], -1.7); }});
    ps.push_back({"add_scalar", {{{3, 4}}, {{5}}, {{2, 3, 4}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::add_scalar(g, x[0], 0.3); }});
    ps.push_back({"sum", {{{3, 4}}, {{5}}, {{2, 3, 4}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::scale(g, ad::sum(g, x[0]), 1.3); }});
    ps.push_back({"mean", {{{3, 4}}, {{5}}, {{2, 3, 4}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::scale(g, ad::mean(g, x[0]), 2.1); }});
    ps.push_back({"transpose", {{{3, 4}}, {{1, 5}}, {{6, 2}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::transpose(g, x[0]); }});
    ps.push_back({"reshape", {{{3, 4}}, {{2, 6}}, {{2, 3, 4}}}, [](Graph<double>& g, const std::vector<Var>& x) {
                      const auto n = ad::shape_numel(g.shape(x[0]));
                      return ad::reshape(g, x[0], {n / 2, 2});
                  }});
    ps.push_back({"concat", {{{3, 4}, {3, 2}}, {{2, 3}, {5, 3}}, {{2, 2, 3}, {2, 2, 1}}},
                  [](Graph<double>& g, const std::vector<Var>& x) {
                      const auto& a = g.shape(x[0]);
                      const auto& b = g.shape(x[1]);
                      std::size_t axis = 0;
                      while (a[axis] == b[axis]) ++axis;
                      return ad::concat(g, {x[0], x[1]}, axis);
                  }});
    ps.push_back({"slice", {{{3, 4}}, {{5, 2}}, {{2, 3, 4}}}, [](Graph<double>& g, const std::vector<Var>& x) {
                      const auto& s = g.shape(x[0]);
                      const std::size_t axis = s.size() - 1;
                      return ad::slice(g, x[0], axis, 1, s[axis]);
                  }});
    ps.push_back({"gather", {{{3, 4}}, {{6}}, {{2, 5}}}, [](Graph<double>& g, const std::vector<Var>& x) {
                      const auto n = ad::shape_numel(g.shape(x[0]));
                      std::vector<std::size_t> idx;
                      for (std::size_t i = 0; i < n + 3; ++i) idx.push_back((i * 7 + 1) % n);  // repeats
                      return ad::gather(g, x[0], idx, {n + 3});
                  }});
    ps.push_back({"add_row", {{{3, 4}, {4}}, {{5, 2}, {2}}, {{2, 3, 3}, {3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::add_row(g, x[0], x[1]); }});
    ps.push_back({"mul_row", {{{3, 4}, {4}}, {{5, 2}, {2}}, {{2, 3, 3}, {3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::mul_row(g, x[0], x[1]); }});
    ps.push_back({"softmax", {{{3, 4}}, {{1, 7}}, {{2, 2, 5}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::softmax(g, x[0]); }, -2.0, 2.0});
    ps.push_back({"layer_norm_core", {{{3, 4}}, {{2, 8}}, {{2, 2, 5}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::layer_norm_core(g, x[0]); }});
    ps.push_back({"standardize_rows", {{{3, 4}}, {{2, 8}}, {{2, 2, 5}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::standardize_rows(g, x[0]); }});
    ps.push_back({"silu", {{{3, 4}}, {{9}}, {{2, 2, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::silu(g, x[0]); }, -3.0, 3.0});
    ps.push_back({"sigmoid", {{{3, 4}}, {{9}}, {{2, 2, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::sigmoid(g, x[0]); }, -3.0, 3.0});
    // Magnitudes kept away from the kink at 0.
    ps.push_back({"abs", {{{3, 4}}, {{9}}, {{2, 2, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::abs(g, x[0]); }, 0.05, 1.0});
    ps.push_back({"abs_negative", {{{3, 4}}, {{9}}, {{2, 2, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::abs(g, x[0]); }, -1.0, -0.05});
    ps.push_back({"conv2d_3x3", {{{2, 8, 8}, {3, 2, 3, 3}, {3}}, {{1, 5, 6}, {2, 1, 3, 3}, {2}}, {{3, 4, 4}, {1, 3, 3, 3}, {1}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::conv2d_3x3(g, x[0], x[1], x[2]); }});
    ps.push_back({"conv2d_3x3_nobias", {{{2, 8, 8}, {3, 2, 3, 3}}, {{1, 3, 3}, {1, 1, 3, 3}}, {{2, 4, 6}, {2, 2, 3, 3}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::conv2d_3x3(g, x[0], x[1]); }});
    ps.push_back({"avg_pool2", {{{2, 8, 8}}, {{1, 2, 2}}, {{3, 4, 6}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::avg_pool2(g, x[0]); }});
    ps.push_back({"rope2d", {{{6, 8}}, {{9, 12}}, {{4, 16}}}, [](Graph<double>& g, const std::vector<Var>& x) {
                      const auto& s = g.shape(x[0]);
                      const std::size_t heads = s[1] == 12 ? 1 : 2;
                      return ad::rope2d(g, x[0], positions_for(s[0]), heads);
                  }});
    ps.push_back({"row_cosine", {{{3, 4}, {3, 4}}, {{5, 2}, {5, 2}}, {{1, 7}, {1, 7}}},
                  [](Graph<double>& g, const std::vector<Var>& x) { return ad::row_cosine(g, x[0], x[1]); }});
    return ps;
}

}  // namespace

DmpConfig gradcheck_model_config() {
    DmpConfig c;
    c.side = 64;
    c.patch = 16;
    c.dim = 16;
    c.depth = 2;
    c.heads = 2;
    return c;
}

DmpParams<double> randomized_params(const DmpConfig& cfg, std::uint64_t seed, double scale) {
    DmpParams<double> p = init_dmp_params(cfg, seed);
    SeqRng rng(mix64(seed ^ 0x6C4ECCULL));
    p.visit([&](const std::string&, Tensor<double>& t) {
        for (auto& v : t.data) v += rng.uniform(-scale, scale);
    });
    return p;
}

std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed, double tolerance, bool include_model) {
    std::vector<GradcheckEntry> out;
    GradcheckOptions opt;
    opt.tolerance = tolerance;
    opt.seed = seed;

    std::uint64_t k = 0;
    for (const auto& p : primitive_probes()) {
        for (std::size_t trial = 0; trial < p.shapes.size(); ++trial) {
            SeqRng rng(mix64(seed ^ (0xC0FFEEULL + ++k)));
            std::vector<Tensor<double>> inputs;
            for (const auto& s : p.shapes[trial]) inputs.push_back(random_tensor(s, rng, p.lo, p.hi));
            const std::uint64_t wseed = mix64(seed + k);
            const auto fn = [&](Graph<double>& g, const std::vector<Var>& x) { return probe(g, p.fn(g, x), wseed); };
            out.push_back({p.name + "#" + std::to_string(trial), ad::gradcheck(fn, inputs, opt)});
        }
    }

    // Losses on small maps.
    {
        SeqRng rng(mix64(seed ^ 0x105E5ULL));
        const std::vector<Tensor<double>> maps{random_tensor({4, 6, 6}, rng), random_tensor({4, 6, 6}, rng)};
        out.push_back({"ssa_loss", ad::gradcheck(
                                       [](Graph<double>& g, const std::vector<Var>& x) { return ssa_loss(g, x[0], x[1]); },
                                       maps, opt)});
        const std::vector<Tensor<double>> imgs{random_tensor({12, 12}, rng, 0.0, 1.0),
                                               random_tensor({12, 12}, rng, 0.0, 1.0)};
        Mask2 roi(12, 12, 1.0, 0);
        for (std::size_t r = 3; r < 9; ++r)
            for (std::size_t c = 2; c < 10; ++c) roi(r, c) = 1;
        out.push_back({"edge_loss", ad::gradcheck([&](Graph<double>& g,
                                                      const std::vector<Var>& x) { return edge_loss(g, x[0], x[1], roi); },
                                                  imgs, opt)});
        out.push_back({"manifold_loss",
                       ad::gradcheck([](Graph<double>& g, const std::vector<Var>& x) { return manifold_loss(g, x[0], x[1]); },
                                     imgs, opt)});
    }

    if (include_model) {
        const DmpConfig cfg = gradcheck_model_config();
        const DmpParams<double> params = randomized_params(cfg, seed);
        const TeacherStub<double> teacher(seed + 1, 8);
        const auto proj = init_projector(cfg.dim, teacher.channels(), seed + 2);

        SeqRng rng(mix64(seed ^ 0xF0E1ULL));
        Image clean(cfg.side, cfg.side, 1.0);
        for (auto& v : clean.data) v = rng.uniform(-1000.0, 2500.0);
        const Tensor<double> t_feat = teacher_features(clean, teacher);
        const Tensor<double> x_gt = to_network<double>(clean);
        Tensor<double> y = x_gt, m({cfg.side, cfg.side});
        for (auto& v : y.data) v += rng.uniform(-0.1, 0.1);
        Mask2 edge(cfg.side, cfg.side, 1.0, 0);
        for (std::size_t r = 20; r < 44; ++r) {
            edge(r, 20) = edge(r, 43) = 1;
            edge(20, r) = edge(43, r) = 1;
        }
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = edge.data[i] ? 1.0 : 0.0;
        const Mask2 roi = dilate(edge, 3);

        std::vector<Tensor<double>> inputs;
        params.visit([&](const std::string&, const Tensor<double>& t) { inputs.push_back(t); });
        inputs.push_back(proj.kernel);
        inputs.push_back(proj.bias);
        const std::size_t n_net = inputs.size() - 2;

        const auto fn = [&](Graph<double>& g, const std::vector<Var>& x) {
            DmpVars v;
            v.blocks.resize(cfg.depth);
            std::size_t i = 0;
            v.visit([&](const std::string&, Var& leaf) { leaf = x[i++]; });
            if (i != n_net) throw ShapeError("gradcheck suite: parameter count mismatch");
            const ProjectorT<Var> pv{x[n_net], x[n_net + 1]};
            const DmpOutputs o = dmp_forward(g, g.constant(y), g.constant(m), v, cfg);
            const Var sp = project_student(g, o.tap, cfg.grid(), cfg.grid(), t_feat.dim(1), t_feat.dim(2), pv);
            return total_loss(g, o.x_pred, g.constant(x_gt), sp, g.constant(t_feat), roi).total;
        };
        GradcheckOptions mopt = opt;
        mopt.samples_per_input = 6;
        out.push_back({"dmp_former+L_total", ad::gradcheck(fn, inputs, mopt)});
    }
    return out;
}

}  // namespace dmar
