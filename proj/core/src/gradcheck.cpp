#include "dmar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmar/rng.hpp"

namespace dmar::ad {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs) {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.constant(t));
    const Var out = fn(g, vars);
    if (g.value(out).size() != 1) throw ShapeError("gradcheck: function is not scalar-valued");
    return g.value(out)[0];
}

}  // namespace

GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                          const GradcheckOptions& options) {
    Graph<double> g;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(g.parameter(t));
    const Var out = fn(g, vars);
    if (g.value(out).size() != 1) throw ShapeError("gradcheck: function is not scalar-valued");
    const double f0 = g.value(out)[0];
    g.backward(out);

    // Element selection: all, or a seeded sample per input / across inputs.
    std::vector<std::vector<std::size_t>> picks(inputs.size());
    SeqRng rng(options.seed);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& idx = picks[i];
        idx.resize(inputs[i].size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (options.samples_per_input && options.samples_per_input < idx.size()) {
            for (std::size_t k = 0; k < options.samples_per_input; ++k)
                std::swap(idx[k], idx[k + rng.integer(0, static_cast<std::int64_t>(idx.size() - k - 1))]);
            idx.resize(options.samples_per_input);
        }
    }
    if (options.total_samples) {
        std::vector<std::pair<std::size_t, std::size_t>> pool;
        for (std::size_t i = 0; i < picks.size(); ++i)
            for (auto j : picks[i]) pool.emplace_back(i, j);
        if (options.total_samples < pool.size()) {
            for (std::size_t k = 0; k < options.total_samples; ++k)
                std::swap(pool[k], pool[k + rng.integer(0, static_cast<std::int64_t>(pool.size() - k - 1))]);
            pool.resize(options.total_samples);
            for (auto& p : picks) p.clear();
            for (auto [i, j] : pool) picks[i].push_back(j);
        }
    }

    GradcheckReport report;
    report.max_rel_error.assign(inputs.size(), 0.0);
    std::vector<Tensor<double>> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<double> analytic = g.grad(vars[i]);
        for (auto j : picks[i]) {
            const double x = inputs[i][j];
            const double h = 1e-6 * (1.0 + std::abs(x));
            work[i][j] = x + h;
            const double fp = evaluate(fn, work);
            work[i][j] = x - h;
            const double fm = evaluate(fn, work);
            work[i][j] = x;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[j];
            const double diff = std::abs(a - numeric);
            const double err = diff <= options.absolute_floor * (1.0 + std::abs(f0))
                                   ? 0.0
                                   : diff / (std::abs(a) + std::abs(numeric) + 1e-12);
            report.max_rel_error[i] = std::max(report.max_rel_error[i], err);
            ++report.checked;
        }
        report.max_error = std::max(report.max_error, report.max_rel_error[i]);
    }
    report.passed = report.max_error < options.tolerance;
    return report;
}

}  // namespace dmar::ad
