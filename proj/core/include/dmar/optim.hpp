#pragma once

#include <cstddef>
#include <vector>

#include "dmar/autodiff.hpp"

namespace dmar::ad {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <class T>
struct AdamWState {
    std::size_t step = 0;
    std::vector<std::vector<T>> m, v;
};

/// One bias-corrected AdamW update with decoupled weight decay:
/// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
/// `grads[i]` must match `params[i]`; the state is sized on first use.
template <class T>
void adamw_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, AdamWState<T>& state,
                double lr, const AdamWConfig& cfg = {});

/// Cosine decay from `base` to `floor` over `total` steps after a linear warmup.
double cosine_lr(std::size_t step, std::size_t total, double base, std::size_t warmup = 0, double floor = 0.0);

}  // namespace dmar::ad
