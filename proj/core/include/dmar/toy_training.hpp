#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dmar/config.hpp"
#include "dmar/dmp_former.hpp"
#include "dmar/ssa_losses.hpp"

namespace dmar {

/// One simulated slice at the network resolution.
struct ToyCase {
    Image clean, artifact;  // HU, side x side
    Mask2 metal, edge;
    std::uint64_t seed = 0;
};

/// Simulates a case whose phantom is resampled to model.side pixels per axis
/// (same field of view as config.phantom) and keeps the slice with most metal.
ToyCase make_toy_case(const Config& config, std::uint64_t seed);

struct TrainLogRow {
    std::size_t step = 0;
    double lr = 0.0;
    double total = 0.0, manifold = 0.0, ssa = 0.0, edge = 0.0;
};

struct ToyResult {
    std::vector<TrainLogRow> log;  // loss before each update
    double initial_manifold = 0.0;
    double final_manifold = 0.0;   // after the last update
    double psnr_input = 0.0;       // artifact vs clean
    double psnr_pred = 0.0;        // prediction vs clean
    Image prediction;              // HU
    DmpParams<float> params;
    ProjectorT<ad::Tensor<float>> projector;
};

using StepCallback = std::function<void(const TrainLogRow&)>;

/// Overfits the DMP-Former (f32) to one case with AdamW and a cosine schedule,
/// minimising the composite loss.
ToyResult train_toy(const Config& config, const ToyCase& tc, std::uint64_t seed, const StepCallback& on_step = {});

std::string train_log_csv_header();
std::string train_log_csv_row(const TrainLogRow& r);

/// Trailing moving averages of the total loss with the given window.
std::vector<double> moving_average_total(const std::vector<TrainLogRow>& log, std::size_t window);

void save_checkpoint(const std::filesystem::path& dir, const DmpParams<float>& params,
                     const ProjectorT<ad::Tensor<float>>& projector);
void load_checkpoint(const std::filesystem::path& dir, const DmpConfig& cfg, DmpParams<float>& params,
                     ProjectorT<ad::Tensor<float>>& projector);

}  // namespace dmar
