#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "dmar/baselines.hpp"
#include "dmar/dataset.hpp"
#include "dmar/error.hpp"
#include "dmar/metrics.hpp"
#include "dmar/parallel.hpp"
#include "dmar/pgmp_io.hpp"
#include "dmar/toy_training.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace dmar;
namespace fs = std::filesystem;

namespace {

// 64^2 x 32 phantom at 0.5 mm: the diagonal needs 91 detectors.
const char* kSmall = R"({
  "phantom": {"nx": 64, "ny": 64, "nz": 32, "spacing_mm": 0.5},
  "geometry": {"n_angles": 90, "n_detectors": 96}
})";

Config small_config(const std::string& extra = "") {
    nlohmann::json j = nlohmann::json::parse(kSmall);
    if (!extra.empty()) j.merge_patch(nlohmann::json::parse(extra));
    return parse_config(j.dump());
}

fs::path write_text(const fs::path& p, const std::string& s) {
    std::ofstream(p) << s;
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DMAR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(std::ifstream(p)); }

std::vector<fs::path> files_of(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path().filename());
    std::sort(out.begin(), out.end());
    return out;
}

bool same_dirs(const fs::path& a, const fs::path& b) {
    if (files_of(a) != files_of(b)) return false;
    for (const auto& f : files_of(a))
        if (read_file_bytes(a / f) != read_file_bytes(b / f)) return false;
    return true;
}

}  // namespace

TEST_CASE("metal-free noiseless monochromatic simulation reproduces the clean slice") {
    const Config cfg = small_config(R"({"plan": {"prevalence": {"sound": 1, "filled": 0, "crowned": 0,
        "implant": 0, "bridge": 0}}, "simulation": {"polychromatic": false, "photon_noise": false},
        "noise": {"spr": 0}})");
    const GeneratedCase c = generate_case(cfg, 3, "sound");
    CHECK(std::count(c.pair.metal_mask.data.begin(), c.pair.metal_mask.data.end(), 1) == 0);
    const Image clean = c.pair.clean.slice(0), art = c.pair.artifact.slice(0);
    CHECK(psnr(clean, art, 4000.0) > 40.0);
}

TEST_CASE("an implant darkens the image along its streaks") {
    const Config cfg = small_config(R"({"plan": {"prevalence": {"sound": 0, "filled": 0, "crowned": 0,
        "implant": 1, "bridge": 0}}, "simulation": {"photon_noise": false}})");
    const GeneratedCase c = generate_case(cfg, 11, "implant");
    const Mask2 metal = c.pair.metal_mask.slice(0);
    REQUIRE(std::count(metal.data.begin(), metal.data.end(), 1) > 0);
    const Image clean = c.pair.clean.slice(0), art = c.pair.artifact.slice(0);
    double worst = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i)
        if (!metal.data[i] && clean.data[i] > -500.0) worst = std::min(worst, art.data[i] - clean.data[i]);
    CHECK(worst < -300.0);
}

TEST_CASE("simulation is independent of the thread count") {
    const Config cfg = small_config();
    set_num_threads(1);
    const GeneratedCase a = generate_case(cfg, 21, "t");
    set_num_threads(4);
    const GeneratedCase b = generate_case(cfg, 21, "t");
    set_num_threads(0);
    CHECK(std::memcmp(a.pair.artifact.data.data(), b.pair.artifact.data.data(),
                      a.pair.artifact.data.size() * sizeof(double)) == 0);
    CHECK(a.pair.sinograms[0].artifact.data == b.pair.sinograms[0].artifact.data);
}

TEST_CASE("manifests of many seeded cases validate") {
    const Config cfg = small_config(R"({"geometry": {"n_angles": 30}})");
    const fs::path root = testing::scratch_dir("manifests");
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const fs::path dir = root / std::to_string(seed);
        write_case(generate_case(cfg, seed, "c" + std::to_string(seed)), cfg, dir);
        std::ifstream in(dir / "manifest.json");
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto problems = validate_manifest(text, dir);
        CHECK_MESSAGE(problems.empty(), "seed " << seed << ": " << (problems.empty() ? "" : problems[0]));
        const auto m = nlohmann::json::parse(text);
        CHECK(m["seed"] == seed);
        CHECK(m["metal_area_px"].size() == m["slices"].size());
    }
}

TEST_CASE("manifest validation reports problems") {
    const Config cfg = small_config();
    const fs::path dir = testing::scratch_dir("bad_manifest");
    write_case(generate_case(cfg, 5, "b"), cfg, dir);
    const nlohmann::json good = read_json(dir / "manifest.json");
    CHECK(validate_manifest(good.dump(), dir).empty());

    auto broken = good;
    broken["version"] = 99;
    CHECK_FALSE(validate_manifest(broken.dump()).empty());
    broken = good;
    broken.erase("seeds");
    CHECK_FALSE(validate_manifest(broken.dump()).empty());
    broken = good;
    broken["format"] = "other";
    CHECK_FALSE(validate_manifest(broken.dump()).empty());
    CHECK_FALSE(validate_manifest("{oops").empty());
    fs::remove(dir / "edge.pgmp");
    CHECK_FALSE(validate_manifest(good.dump(), dir).empty());
}

TEST_CASE("datasets regenerate bit for bit") {
    const Config cfg = small_config();
    const fs::path root = testing::scratch_dir("dataset");
    gen_dataset(cfg, 3, 40, root / "d");
    const auto cases = dataset_cases(root / "d");
    REQUIRE(cases.size() == 3);
    const auto index = read_json(root / "d" / "index.json");
    CHECK(index["n_cases"] == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const fs::path again = root / ("re" + std::to_string(i));
        regenerate_case(cases[i] / "manifest.json", again);
        CHECK(same_dirs(cases[i], again));
    }
    set_num_threads(1);
    gen_dataset(cfg, 3, 40, root / "serial");
    set_num_threads(0);
    CHECK(same_dirs(root / "d" / cases[1].filename(), root / "serial" / cases[1].filename()));

    gen_dataset(cfg, 0, 1, root / "empty");
    CHECK(read_json(root / "empty" / "index.json")["cases"].empty());
    CHECK(dataset_cases(root / "empty").empty());
}

TEST_CASE("loaded slices feed the evaluation") {
    const Config cfg = small_config();
    const fs::path root = testing::scratch_dir("eval_ds");
    gen_dataset(cfg, 2, 7, root);
    const LoadedSlice s = load_case_slice(dataset_cases(root)[0]);
    CHECK(s.clean.same_shape(s.artifact));
    CHECK(s.mu_water > 0.0);
    const auto ec = eval_cases_from_dataset(root, {"input", "li", "nmar"});
    REQUIRE(ec.size() == 2);
    CHECK(ec[0].outputs.size() == 3);
    CHECK_THROWS(eval_cases_from_dataset(root, {"nonsense"}));
}

TEST_CASE("toy training logs every step and checkpoints round trip") {
    Config cfg = small_config(R"({"train": {"steps": 6}})");
    const ToyCase tc = make_toy_case(cfg, 3);
    CHECK(tc.clean.rows == cfg.model.side);
    const ToyResult a = train_toy(cfg, tc, 3);
    const ToyResult b = train_toy(cfg, tc, 3);
    REQUIRE(a.log.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a.log[i].step == i);
        CHECK(std::isfinite(a.log[i].total));
        CHECK(a.log[i].total == b.log[i].total);
    }
    CHECK(a.prediction.data == b.prediction.data);
    CHECK(train_log_csv_header().find("total") != std::string::npos);
    const auto ma = moving_average_total(a.log, 3);
    CHECK(ma.size() == 4);
    CHECK(ma[0] == doctest::Approx((a.log[0].total + a.log[1].total + a.log[2].total) / 3.0));

    const fs::path root = testing::scratch_dir("ckpt");
    save_checkpoint(root / "a", a.params, a.projector);
    auto params = a.params;
    auto proj = a.projector;
    load_checkpoint(root / "a", cfg.model, params, proj);
    save_checkpoint(root / "b", params, proj);
    CHECK(same_dirs(root / "a", root / "b"));
}

TEST_CASE("cli exit codes") {
    const fs::path root = testing::scratch_dir("cli_codes");
    const auto bad = write_text(root / "bad.json", R"({"noise": {"sprr": 1}})");
    CHECK(run_cli("--config " + bad.string() + " simulate --out " + (root / "x").string()) == 2);
    CHECK(run_cli("simulate") == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("--help") == 0);
    const auto small = write_text(root / "small.json", kSmall);
    CHECK(run_cli("--config " + small.string() + " gen-dataset --cases 0 --out " + (root / "empty").string()) == 0);
    CHECK(fs::exists(root / "empty" / "index.json"));
}

TEST_CASE("cli seed precedence") {
    const fs::path root = testing::scratch_dir("cli_seed");
    nlohmann::json j = nlohmann::json::parse(kSmall);
    j["seed"] = 7;
    const auto cfg = write_text(root / "cfg.json", j.dump());
    auto seed_of = [&](const std::string& flag, const std::string& name) {
        const std::string out = (root / name).string();
        const int code = run_cli("--config " + cfg.string() + " " + flag + " simulate --out " + out);
        return code == 0 ? read_json(fs::path(out) / "manifest.json")["seed"].get<long>() : -code;
    };
    CHECK(seed_of("", "cfg") == 7);
    ::setenv("PGMP_SEED", "5", 1);
    CHECK(seed_of("", "env") == 5);
    CHECK(seed_of("--seed 6", "flag") == 6);
    ::setenv("PGMP_SEED", "five", 1);
    CHECK(seed_of("", "garbage") == -2);
    ::unsetenv("PGMP_SEED");
}

TEST_CASE("cli mar li leaves a metal-free sinogram untouched") {
    const fs::path root = testing::scratch_dir("cli_mar");
    // NMAR reconstructs a prior, so the geometry must cover the configured image.
    const ProjectionGeometry g;
    Sinogram s(g, SinogramUnit::LogProjection);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = 0.5 + 0.5 * std::sin(0.01 * static_cast<double>(i));
    write_sinogram(root / "s.pgmp", s);
    write_sinogram(root / "trace.pgmp", Sinogram(g, SinogramUnit::PathLength, 0.0));
    for (const char* m : {"li", "nmar"}) {
        const fs::path out = root / (std::string(m) + ".pgmp");
        REQUIRE(run_cli(std::string("mar --method ") + m + " --in " + (root / "s.pgmp").string() + " --trace " +
                        (root / "trace.pgmp").string() + " --out " + out.string()) == 0);
        CHECK(read_file_bytes(out) == read_file_bytes(root / "s.pgmp"));
    }
}

TEST_CASE("cli fbp and eval") {
    const fs::path root = testing::scratch_dir("cli_eval");
    const auto cfg = write_text(root / "cfg.json", kSmall);
    REQUIRE(run_cli("--config " + cfg.string() + " gen-dataset --cases 2 --seed 3 --out " + (root / "d").string()) == 0);
    const fs::path c0 = dataset_cases(root / "d")[0];
    REQUIRE(run_cli("--config " + cfg.string() + " fbp --hu --filter ram-lak --in " +
                    (c0 / "sino_clean_00.pgmp").string() + " --out " + (root / "f.pgmp").string() + " --png " +
                    (root / "f.png").string()) == 0);
    const Image f = image_from_pgmp(read_pgmp(root / "f.pgmp"), 0.5);
    const LoadedSlice s = load_case_slice(c0);
    CHECK(f.data == s.clean.data);
    CHECK(fs::exists(root / "f.png"));
    REQUIRE(run_cli("--config " + cfg.string() + " eval --methods input,li,nmar --plots --dataset " +
                    (root / "d").string() + " --out " + (root / "r").string()) == 0);
    const auto rep = read_json(root / "r" / "report.json");
    CHECK(rep.contains("summary"));
}
