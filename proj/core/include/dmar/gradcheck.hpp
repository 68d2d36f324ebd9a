#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dmar/autodiff.hpp"

namespace dmar::ad {

using ScalarFn = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

struct GradcheckOptions {
    /// Elements checked per input; 0 checks all of them.
    std::size_t samples_per_input = 0;
    /// Total elements checked across all inputs; 0 = no global cap.
    std::size_t total_samples = 0;
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
    /// Elements with |a - n| <= absolute_floor * (1 + |f(x)|) count as exact.
    /// Central differences carry ~1e-10 |f| of roundoff, which the relative
    /// measure would otherwise blow up where the true gradient is zero.
    double absolute_floor = 1e-9;
};

struct GradcheckReport {
    std::vector<double> max_rel_error;  // per input
    double max_error = 0.0;
    std::size_t checked = 0;
    bool passed = true;
};

/// Central differences with h = 1e-6 (1 + |x|) against the tape gradient;
/// relative error |a - n| / (|a| + |n| + 1e-12). `fn` must return a scalar.
GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs,
                          const GradcheckOptions& options = {});

}  // namespace dmar::ad
