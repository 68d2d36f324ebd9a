#include "dmar/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dmar::ad {

template <class T>
void adamw_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, AdamWState<T>& state,
                double lr, const AdamWConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeError("adamw_step: parameter and gradient counts differ");
    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.emplace_back(p->size(), T{});
            state.v.emplace_back(p->size(), T{});
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i]->size() != grads[i].size() || state.m[i].size() != grads[i].size())
            throw ShapeError("adamw_step: shape mismatch for parameter " + std::to_string(i));

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->data;
        const auto& gr = grads[i].data;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = gr[j];
            const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * g;
            const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double update = (mj / bc1) / (std::sqrt(vj / bc2) + cfg.eps);
            const double theta = static_cast<double>(p[j]);
            p[j] = static_cast<T>(theta - lr * (update + cfg.weight_decay * theta));
        }
    }
}

double cosine_lr(std::size_t step, std::size_t total, double base, std::size_t warmup, double floor) {
    if (total == 0) return base;
    if (step < warmup) return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
    const double span = static_cast<double>(std::max<std::size_t>(total - std::min(total, warmup), 1));
    const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
    return floor + 0.5 * (base - floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

template void adamw_step<float>(const std::vector<Tensor<float>*>&, const std::vector<Tensor<float>>&,
                                AdamWState<float>&, double, const AdamWConfig&);
template void adamw_step<double>(const std::vector<Tensor<double>*>&, const std::vector<Tensor<double>>&,
                                 AdamWState<double>&, double, const AdamWConfig&);

}  // namespace dmar::ad
