#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmar/dmp_former.hpp"
#include "dmar/metrics.hpp"
#include "dmar/phantom.hpp"
#include "dmar/simulate.hpp"
#include "dmar/ssa_losses.hpp"

namespace dmar {

struct LossConfig {
    LossWeights weights;
    int roi_dilation = 3;
    std::uint64_t teacher_seed = 7;
    std::size_t teacher_channels = 16;
};

struct TrainConfig {
    std::size_t steps = 2000;
    double lr = 1e-4;
    std::size_t warmup = 0;
    double lr_floor = 0.0;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
};

struct EvalConfig {
    MetricWindow window;
    std::optional<std::vector<double>> boundaries;
};

/// Whole-run configuration. Every field has a default; a JSON document only
/// overrides what it names, and unknown keys are rejected.
struct Config {
    std::optional<std::uint64_t> seed;
    PhantomParams phantom;
    Prevalence prevalence;
    SimulationParams simulation;
    std::optional<std::vector<std::size_t>> slices;  // simulation.slices
    DmpConfig model;
    LossConfig loss;
    TrainConfig train;
    EvalConfig eval;

    /// Cross-field checks; throws ConfigError naming the key.
    void validate() const;
};

/// Throws ConfigError(key_path, ...) for malformed JSON, unknown keys, wrong
/// types and out-of-range values.
Config parse_config(const std::string& json_text);
Config load_config(const std::filesystem::path& path);

/// Canonical JSON of every field (stable key order).
std::string config_to_json(const Config& c, int indent = 2);

}  // namespace dmar
