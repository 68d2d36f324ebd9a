#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dmar {

struct SizeStrata {
    std::vector<std::string> names;
    std::vector<std::vector<std::size_t>> groups;  // case indices, ascending area
    std::vector<double> boundaries;                // area edges actually used
};

/// Terciles of the batch by area (default) or explicit edges b0 < b1 < ... :
/// group j holds b_j <= area < b_{j+1}.
SizeStrata stratify_by_size(const std::vector<double>& areas,
                            const std::optional<std::vector<double>>& boundaries = std::nullopt);

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    double pearson_r = 0.0;
};

/// Ordinary least squares of ys on xs with Pearson r (0 when ys are constant).
RegressionFit regression_slope(const std::vector<double>& xs, const std::vector<double>& ys);

struct MannWhitneyResult {
    double u = 0.0;       // U of the first sample
    double p = 1.0;       // two-sided
    bool exact = false;
};

/// Midranks for ties; exact p by enumeration when both samples have <= 8
/// elements, normal approximation (tie and continuity corrected) otherwise.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

struct KruskalWallisResult {
    double h = 0.0;
    double p = 1.0;
    std::size_t df = 0;
};

/// Tie-corrected H; p from the chi-square upper tail with k - 1 dof.
KruskalWallisResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

/// Midranks (1-based) of the pooled values.
std::vector<double> midranks(const std::vector<double>& values);

double mean_of(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sd_of(const std::vector<double>& v);
double median_of(std::vector<double> v);

}  // namespace dmar
