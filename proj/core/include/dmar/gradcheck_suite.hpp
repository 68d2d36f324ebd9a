#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmar/dmp_former.hpp"
#include "dmar/gradcheck.hpp"

namespace dmar {

struct GradcheckEntry {
    std::string name;
    ad::GradcheckReport report;
};

/// Every autodiff primitive on three random shapes (each reduced to a scalar by
/// a random weighted sum), the individual losses, and the full L_total graph of
/// a tiny randomly initialised DMP-Former against all of its parameters.
std::vector<GradcheckEntry> run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                bool include_model = true);

/// Tiny model used by the full-graph check: side 64, patch 16, d 16, 2 blocks, 2 heads.
DmpConfig gradcheck_model_config();

/// init_dmp_params plus seeded noise on every tensor so that no gradient path
/// is blocked by the zero-initialised layers.
DmpParams<double> randomized_params(const DmpConfig& cfg, std::uint64_t seed, double scale = 0.1);

}  // namespace dmar
