#include "dmar/toy_training.hpp"

#include <cmath>
#include <cstdio>

#include "dmar/error.hpp"
#include "dmar/metrics.hpp"
#include "dmar/optim.hpp"
#include "dmar/pgmp_io.hpp"
#include "dmar/rng.hpp"
#include "dmar/simulate.hpp"

namespace dmar {

using ad::Graph;
using ad::Tensor;
using ad::Var;

ToyCase make_toy_case(const Config& config, std::uint64_t seed) {
    config.validate();
    const std::size_t side = config.model.side;
    PhantomParams pp = config.phantom;
    const double fov = static_cast<double>(pp.dims[0]) * pp.spacing_mm[0];
    const double pixel = fov / static_cast<double>(side);
    pp.dims = {side, side, pp.dims[2]};
    pp.spacing_mm = {pixel, pixel, pp.spacing_mm[2]};

    SimulationParams sim = config.simulation;
    sim.geometry = ProjectionGeometry::covering(side, side, pixel, sim.geometry.n_angles);
    sim.geometry.step_fraction = config.simulation.geometry.step_fraction;

    const Phantom ph = synthetic_phantom(pp, mix64(seed ^ 0x9A4701ULL));
    const RestorationPlan plan = plan_restorations(ph.labels, mix64(seed ^ 0x91A4ULL), config.prevalence);
    const CasePair pair = simulate_case(ph, plan, sim, mix64(seed ^ 0x4015EULL));
    ToyCase tc;
    tc.clean = pair.clean.slice(0);
    tc.artifact = pair.artifact.slice(0);
    tc.metal = pair.metal_mask.slice(0);
    tc.edge = pair.edge.slice(0);
    tc.seed = seed;
    return tc;
}

namespace {

struct Bound {
    DmpVars net;
    ProjectorT<Var> proj;
};

Bound bind_all(Graph<float>& g, const DmpParams<float>& p, const ProjectorT<Tensor<float>>& proj) {
    Bound b{bind_params(g, p, true), {}};
    b.proj.kernel = g.parameter(proj.kernel);
    b.proj.bias = g.parameter(proj.bias);
    return b;
}

double metric_psnr(const Image& img, const ToyCase& tc, const MetricWindow& w) {
    const Image a = prepare_for_metrics(img, tc.clean, &tc.metal, w);
    const Image r = prepare_for_metrics(tc.clean, tc.clean, &tc.metal, w);
    return psnr(a, r, w.range());
}

}  // namespace

ToyResult train_toy(const Config& config, const ToyCase& tc, std::uint64_t seed, const StepCallback& on_step) {
    config.validate();
    const DmpConfig& mc = config.model;
    const std::size_t side = mc.side;
    if (tc.clean.rows != side || tc.clean.cols != side || !tc.artifact.same_shape(tc.clean) ||
        !tc.edge.same_shape(tc.metal) || tc.edge.rows != side || tc.edge.cols != side)
        throw ShapeError("train_toy: case images must be model.side square");

    const TeacherStub<float> teacher(config.loss.teacher_seed, config.loss.teacher_channels);
    if (side < teacher.min_side()) throw ParameterError("train_toy: model.side below the teacher's minimum input");
    const Tensor<float> t_feat = teacher_features(tc.clean, teacher);
    const std::size_t th = t_feat.dim(1), tw = t_feat.dim(2);

    const Tensor<float> y = to_network<float>(tc.artifact);
    const Tensor<float> m = mask_to_network<float>(tc.edge);
    const Tensor<float> x_gt = to_network<float>(tc.clean);
    const Mask2 roi = dilate(tc.edge, config.loss.roi_dilation);

    ToyResult res;
    res.params = cast_params<float>(init_dmp_params(mc, seed));
    const auto p64 = init_projector(mc.dim, teacher.channels(), mix64(seed ^ 0x5AA1ULL));
    res.projector = {p64.kernel.cast<float>(), p64.bias.cast<float>()};

    std::vector<Tensor<float>*> targets;
    res.params.visit([&](const std::string&, Tensor<float>& t) { targets.push_back(&t); });
    targets.push_back(&res.projector.kernel);
    targets.push_back(&res.projector.bias);

    ad::AdamWState<float> state;
    ad::AdamWConfig acfg;
    acfg.beta1 = config.train.beta1;
    acfg.beta2 = config.train.beta2;
    acfg.weight_decay = config.train.weight_decay;

    const std::size_t steps = config.train.steps;
    res.log.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        Graph<float> g;
        Bound b = bind_all(g, res.params, res.projector);
        const DmpOutputs out = dmp_forward(g, g.constant(y), g.constant(m), b.net, mc);
        const Var sp = project_student(g, out.tap, mc.grid(), mc.grid(), th, tw, b.proj);
        const LossTerms terms = total_loss(g, out.x_pred, g.constant(x_gt), sp, g.constant(t_feat), roi,
                                           config.loss.weights);
        g.backward(terms.total);

        std::vector<Var> vars = leaves(b.net);
        vars.push_back(b.proj.kernel);
        vars.push_back(b.proj.bias);
        std::vector<Tensor<float>> grads;
        grads.reserve(vars.size());
        for (auto v : vars) grads.push_back(g.grad(v));

        TrainLogRow row;
        row.step = step;
        row.lr = ad::cosine_lr(step, steps, config.train.lr, config.train.warmup, config.train.lr_floor);
        row.total = g.value(terms.total)[0];
        row.manifold = g.value(terms.manifold)[0];
        row.ssa = g.value(terms.ssa)[0];
        row.edge = g.value(terms.edge)[0];
        if (!std::isfinite(row.total)) throw NumericError("train_toy: loss became non-finite at step " + std::to_string(step));
        res.log.push_back(row);
        if (on_step) on_step(row);

        ad::adamw_step(targets, grads, state, row.lr, acfg);
    }

    const Tensor<float> pred = dmp_predict(res.params, y, m, mc);
    double mae = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) mae += std::abs(static_cast<double>(pred[i]) - x_gt[i]);
    res.final_manifold = mae / static_cast<double>(pred.size());
    res.initial_manifold = res.log.empty() ? res.final_manifold : res.log.front().manifold;
    res.prediction = from_network(pred, tc.clean.spacing_mm);
    const MetricWindow w = config.eval.window;
    res.psnr_input = metric_psnr(tc.artifact, tc, w);
    res.psnr_pred = metric_psnr(res.prediction, tc, w);
    return res;
}

std::string train_log_csv_header() { return "step,lr,total,manifold,ssa,edge\n"; }

std::string train_log_csv_row(const TrainLogRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step, r.lr, r.total, r.manifold, r.ssa, r.edge);
    return buf;
}

std::vector<double> moving_average_total(const std::vector<TrainLogRow>& log, std::size_t window) {
    if (window == 0) throw ParameterError("moving_average_total: window must be positive");
    std::vector<double> out;
    double acc = 0.0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        acc += log[i].total;
        if (i >= window) acc -= log[i - window].total;
        if (i + 1 >= window) out.push_back(acc / static_cast<double>(window));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& dir, const DmpParams<float>& params,
                     const ProjectorT<Tensor<float>>& projector) {
    std::vector<std::pair<std::string, PgmpTensor>> items;
    params.visit([&](const std::string& name, const Tensor<float>& t) { items.emplace_back(name, tensor_to_pgmp(t)); });
    items.emplace_back("projector.kernel", tensor_to_pgmp(projector.kernel));
    items.emplace_back("projector.bias", tensor_to_pgmp(projector.bias));
    write_archive(dir, items);
}

void load_checkpoint(const std::filesystem::path& dir, const DmpConfig& cfg, DmpParams<float>& params,
                     ProjectorT<Tensor<float>>& projector) {
    const auto items = read_archive(dir);
    params = cast_params<float>(init_dmp_params(cfg, 0));
    std::vector<std::pair<std::string, Tensor<float>*>> slots;
    params.visit([&](const std::string& name, Tensor<float>& t) { slots.emplace_back(name, &t); });
    slots.emplace_back("projector.kernel", &projector.kernel);
    slots.emplace_back("projector.bias", &projector.bias);
    if (items.size() != slots.size()) throw IoError("checkpoint: tensor count differs from the model config");
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (items[i].first != slots[i].first) throw IoError("checkpoint: expected " + slots[i].first + ", found " + items[i].first);
        Tensor<float> t = tensor_from_pgmp<float>(items[i].second);
        if (!slots[i].second->shape.empty() && t.shape != slots[i].second->shape)
            throw IoError("checkpoint: shape mismatch for " + slots[i].first);
        *slots[i].second = std::move(t);
    }
}

}  // namespace dmar
