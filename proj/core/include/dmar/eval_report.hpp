#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dmar/metrics.hpp"
#include "dmar/stats.hpp"
#include "dmar/volume.hpp"

namespace dmar {

struct EvalCase {
    std::string case_id;
    Image reference;  // HU
    Mask2 metal;
    std::vector<std::pair<std::string, Image>> outputs;  // method name -> HU image
};

struct MethodScore {
    double psnr = 0.0;
    double ssim = 0.0;
};

struct CaseMetrics {
    std::string case_id;
    double metal_area = 0.0;            // px
    std::vector<MethodScore> scores;    // in method order
};

struct MethodSummary {
    std::string method;
    double psnr_mean = 0.0, psnr_sd = 0.0, psnr_median = 0.0;
    double ssim_mean = 0.0, ssim_sd = 0.0;
    std::vector<double> stratum_psnr_mean;  // per size group, NaN for empty groups
    std::optional<RegressionFit> fit;       // PSNR vs metal area; absent when degenerate
};

struct EvalReport {
    MetricWindow window;
    std::vector<std::string> methods;
    SizeStrata strata;
    std::vector<CaseMetrics> cases;  // input order
    std::vector<MethodSummary> summary;

    std::string to_json() const;
    std::string to_text() const;
};

/// Scores every method against the reference after windowing with metal
/// pixels excluded, then aggregates per method, per size stratum and by
/// linear regression on metal area. Cases are scored in parallel.
EvalReport eval_report(const std::vector<EvalCase>& cases, const std::vector<std::string>& methods,
                       const MetricWindow& window = {},
                       const std::optional<std::vector<double>>& boundaries = std::nullopt);

/// report.json, report.txt and, when `plots` is set, psnr_distribution.png and
/// psnr_vs_area.png.
void write_report(const EvalReport& report, const std::filesystem::path& dir, bool plots);

}  // namespace dmar
