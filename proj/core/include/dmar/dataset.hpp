#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmar/config.hpp"
#include "dmar/eval_report.hpp"
#include "dmar/simulate.hpp"

namespace dmar {

inline constexpr int kManifestVersion = 1;

/// Seeds derived from a case seed.
struct CaseSeeds {
    std::uint64_t phantom, plan, noise;
    static CaseSeeds derive(std::uint64_t case_seed);
};

struct GeneratedCase {
    std::string case_id;
    std::uint64_t seed = 0;
    Phantom phantom;
    RestorationPlan plan;
    CasePair pair;
};

/// Phantom, plan and simulation of one case. Pure function of (config, seed).
GeneratedCase generate_case(const Config& config, std::uint64_t case_seed, const std::string& case_id);

/// Writes the case files and manifest.json into `dir` (created if missing).
void write_case(const GeneratedCase& c, const Config& config, const std::filesystem::path& dir);

/// `n` cases with seeds seed + i in case_0000 ... plus index.json. Cases run in
/// parallel; outputs do not depend on the thread count.
void gen_dataset(const Config& config, std::size_t n, std::uint64_t seed, const std::filesystem::path& out);

/// Re-runs the case described by `manifest_path` into `out_dir`.
void regenerate_case(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir);

/// Schema problems of a manifest (empty when valid). When `case_dir` is given,
/// also checks that every referenced file exists.
std::vector<std::string> validate_manifest(const std::string& json_text,
                                           const std::filesystem::path& case_dir = {});

std::string plan_to_json(const RestorationPlan& plan);

/// Loaded case for evaluation (one slice).
struct LoadedSlice {
    std::string case_id;
    Image clean, artifact;  // HU
    Mask2 metal, edge;
    SliceSinograms sinograms;
    double mu_water = 0.0;
};

/// Reads slice `index` of a generated case.
LoadedSlice load_case_slice(const std::filesystem::path& case_dir, std::size_t index = 0);

/// Case directories listed in <dataset>/index.json.
std::vector<std::filesystem::path> dataset_cases(const std::filesystem::path& dataset);

/// Builds evaluation inputs for the given methods ("input", "li", "nmar",
/// or "file:<name>" to read <case>/<name>.pgmp) over every case of a dataset.
/// Reconstruction and NMAR settings come from each case's manifest.
std::vector<EvalCase> eval_cases_from_dataset(const std::filesystem::path& dataset,
                                              const std::vector<std::string>& methods);

}  // namespace dmar
