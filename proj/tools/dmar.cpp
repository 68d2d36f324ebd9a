// dmar: command-line front end for simulation, reconstruction, baselines,
// evaluation and the toy network.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "dmar/baselines.hpp"
#include "dmar/config.hpp"
#include "dmar/dataset.hpp"
#include "dmar/error.hpp"
#include "dmar/eval_report.hpp"
#include "dmar/gradcheck_suite.hpp"
#include "dmar/parallel.hpp"
#include "dmar/pgmp_io.hpp"
#include "dmar/physics_model.hpp"
#include "dmar/png_export.hpp"
#include "dmar/recon.hpp"
#include "dmar/rng.hpp"
#include "dmar/toy_training.hpp"

namespace fs = std::filesystem;
using namespace dmar;

namespace {

struct Globals {
    int threads = 0;
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

Config load(const Globals& g) { return g.config_path.empty() ? parse_config("{}") : load_config(g.config_path); }

// --seed beats PGMP_SEED beats the config file.
std::uint64_t resolve_seed(const Globals& g, const Config& c) {
    if (g.seed) return *g.seed;
    if (const char* env = std::getenv("PGMP_SEED"); env && *env) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (*end != '\0') throw ConfigError("PGMP_SEED", "expected an unsigned integer");
        return v;
    }
    return c.seed.value_or(0);
}

double mu_water_of(const Config& c) {
    return attenuation_mu(Material::Water, effective_energy(build_spectrum(c.simulation.spectrum)));
}

ReconParams recon_of(const Config& c) {
    ReconParams r;
    r.filter = c.simulation.filter;
    r.rows = c.phantom.dims[1];
    r.cols = c.phantom.dims[0];
    r.pixel_mm = c.phantom.spacing_mm[0];
    return r;
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
    const std::string s = j.dump(2) + "\n";
    write_file_bytes(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

Image read_image(const fs::path& p, double spacing) {
    const PgmpTensor t = read_pgmp(p);
    if (t.dims.size() == 3) return volume_from_pgmp(t, {spacing, spacing, 1.0}).slice(0);
    return image_from_pgmp(t, spacing);
}

Mask2 read_mask(const fs::path& p, double spacing) {
    const PgmpTensor t = read_pgmp(p);
    if (t.dims.size() == 3) return mask_from_pgmp(t, {spacing, spacing, 1.0}).slice(0);
    if (t.dims.size() != 2) throw ShapeError(p.string() + ": expected a 2-D or 3-D mask");
    Mask2 m(t.dims[0], t.dims[1], spacing);
    m.data = pgmp_u8(t);
    return m;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t b = 0;
    while (b <= s.size()) {
        const auto e = s.find(',', b);
        const auto part = s.substr(b, e == std::string::npos ? std::string::npos : e - b);
        if (!part.empty()) out.push_back(part);
        if (e == std::string::npos) break;
        b = e + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dental CT metal-artifact simulation, baselines and DMP-Former toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--threads", g.threads, "Worker threads (0 = runtime default); results do not depend on it");
    app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed; overrides PGMP_SEED and the config");

    // gen-dataset
    auto* gen = app.add_subcommand("gen-dataset", "Generate N simulated case pairs (case seed = seed + index)");
    std::string gen_out;
    std::size_t gen_cases = 1;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--cases", gen_cases, "Number of cases");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate one case pair");
    std::string sim_out, sim_id = "case";
    sim->add_option("--out", sim_out, "Output directory")->required();
    sim->add_option("--case-id", sim_id, "Case identifier");

    // fbp
    auto* fbp_cmd = app.add_subcommand("fbp", "Filtered back-projection of a log-projection sinogram");
    std::string fbp_in, fbp_out, fbp_filter, fbp_png;
    bool fbp_hu = false;
    fbp_cmd->add_option("--in", fbp_in, "Sinogram (.pgmp with JSON sidecar)")->required()->check(CLI::ExistingFile);
    fbp_cmd->add_option("--out", fbp_out, "Output image (.pgmp)")->required();
    fbp_cmd->add_option("--filter", fbp_filter, "ram-lak or hann (default from config)");
    fbp_cmd->add_flag("--hu", fbp_hu, "Convert to HU at the configured effective energy");
    fbp_cmd->add_option("--png", fbp_png, "Also write a windowed PNG (implies HU)");

    // mar
    auto* mar = app.add_subcommand("mar", "Sinogram-domain metal artifact reduction");
    std::string mar_method, mar_in, mar_trace, mar_out, mar_recon;
    mar->add_option("--method", mar_method, "li or nmar")->required()->check(CLI::IsMember({"li", "nmar"}));
    mar->add_option("--in", mar_in, "Artifact sinogram")->required()->check(CLI::ExistingFile);
    mar->add_option("--trace", mar_trace, "Metal path-length sinogram defining the trace")->required()->check(CLI::ExistingFile);
    mar->add_option("--out", mar_out, "Corrected sinogram")->required();
    mar->add_option("--recon", mar_recon, "Also write the HU reconstruction of the corrected sinogram");

    // eval
    auto* ev = app.add_subcommand("eval", "Score methods on a generated dataset");
    std::string ev_dataset, ev_out, ev_methods = "input,li,nmar";
    bool ev_plots = false;
    ev->add_option("--dataset", ev_dataset, "Dataset directory (with index.json)")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--out", ev_out, "Report directory")->required();
    ev->add_option("--methods", ev_methods, "Comma list of input, li, nmar, file:<name>");
    ev->add_flag("--plots", ev_plots, "Write PNG plots");

    // forward
    auto* fwd = app.add_subcommand("forward", "Seeded random-weight DMP-Former forward pass");
    std::string fwd_in, fwd_edge, fwd_out;
    fwd->add_option("--input", fwd_in, "Input HU image (.pgmp); default is a seeded random image");
    fwd->add_option("--edge", fwd_edge, "Edge mask (.pgmp); default empty");
    fwd->add_option("--out", fwd_out, "Prediction (.pgmp, HU)");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every primitive and the full loss graph");
    double gc_tol = 1e-4;
    bool gc_no_model = false;
    gc->add_option("--tolerance", gc_tol, "Maximum relative error");
    gc->add_flag("--no-model", gc_no_model, "Skip the full-model check");

    // train-toy
    auto* tt = app.add_subcommand("train-toy", "Overfit the toy DMP-Former on one simulated case");
    std::string tt_out;
    std::optional<std::size_t> tt_steps;
    tt->add_option("--out", tt_out, "Output directory (loss.csv, checkpoint/, prediction.pgmp, summary.json)")->required();
    tt->add_option("--steps", tt_steps, "Override train.steps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (g.threads > 0) set_num_threads(g.threads);
        Config cfg = load(g);
        const std::uint64_t seed = resolve_seed(g, cfg);

        if (*gen) {
            gen_dataset(cfg, gen_cases, seed, gen_out);
            std::printf("wrote %zu cases to %s\n", gen_cases, gen_out.c_str());
        } else if (*sim) {
            const GeneratedCase c = generate_case(cfg, seed, sim_id);
            write_case(c, cfg, sim_out);
            std::printf("case %s (seed %llu): %zu slice(s), E_eff %.2f keV -> %s\n", sim_id.c_str(),
                        static_cast<unsigned long long>(seed), c.pair.slices.size(), c.pair.effective_energy_kev,
                        sim_out.c_str());
        } else if (*fbp_cmd) {
            const Sinogram s = read_sinogram(fbp_in);
            ReconParams r = recon_of(cfg);
            if (!fbp_filter.empty()) r.filter = parse_filter(fbp_filter);
            Image img = fbp(s, r);
            if (fbp_hu || !fbp_png.empty()) img = mu_to_hu(img, mu_water_of(cfg));
            write_pgmp(fbp_out, image_to_pgmp(img));
            if (!fbp_png.empty()) export_png(img, cfg.eval.window.lo, cfg.eval.window.hi, fbp_png);
        } else if (*mar) {
            const Sinogram s = read_sinogram(mar_in);
            const MetalTrace trace = metal_trace(read_sinogram(mar_trace));
            MarDiagnostics diag;
            const ReconParams r = recon_of(cfg);
            NmarParams np;
            np.thresholds = cfg.simulation.thresholds;
            np.mu_water = mu_water_of(cfg);
            Sinogram corrected;
            if (mar_method == "li") {
                corrected = li_correct(s, trace, &diag);
            } else {
                const Image raw_hu = mu_to_hu(fbp(s, r), np.mu_water);
                const Image li_hu = mu_to_hu(fbp(li_correct(s, trace), r), np.mu_water);
                corrected = nmar_correct(s, trace, li_hu, s.geometry, np, &diag, &raw_hu);
            }
            write_sinogram(mar_out, corrected);
            if (!mar_recon.empty()) write_pgmp(mar_recon, image_to_pgmp(mu_to_hu(fbp(corrected, r), np.mu_water)));
            for (const auto& w : diag.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            std::printf("%s: %zu traced bins corrected\n", mar_method.c_str(), trace.count());
        } else if (*ev) {
            const auto methods = split(ev_methods);
            const auto cases = eval_cases_from_dataset(ev_dataset, methods);
            const EvalReport rep = eval_report(cases, methods, cfg.eval.window, cfg.eval.boundaries);
            write_report(rep, ev_out, ev_plots);
            std::fputs(rep.to_text().c_str(), stdout);
        } else if (*fwd) {
            const DmpConfig& mc = cfg.model;
            mc.validate();
            Image y(mc.side, mc.side, 1.0);
            if (!fwd_in.empty()) {
                y = read_image(fwd_in, 1.0);
            } else {
                SeqRng rng(mix64(seed ^ 0xF04Dull));
                for (auto& v : y.data) v = rng.uniform(-1000.0, 2000.0);
            }
            Mask2 edge = fwd_edge.empty() ? Mask2(y.rows, y.cols, 1.0, 0) : read_mask(fwd_edge, 1.0);
            if (y.rows != mc.side || y.cols != mc.side || !edge.same_shape(y))
                throw ShapeError("forward: input must be model.side square");
            const auto params = cast_params<float>(randomized_params(mc, seed, 0.02));
            const auto pred = dmp_predict(params, to_network<float>(y), mask_to_network<float>(edge), mc);
            const Image out = from_network(pred, y.spacing_mm);
            double sum = 0.0, sq = 0.0;
            for (double v : out.data) {
                sum += v;
                sq += v * v;
            }
            const double n = static_cast<double>(out.size());
            std::printf("forward side=%zu d=%zu L=%zu: mean %.6f HU, rms %.6f HU\n", mc.side, mc.dim, mc.depth, sum / n,
                        std::sqrt(sq / n));
            if (!fwd_out.empty()) write_pgmp(fwd_out, image_to_pgmp(out));
        } else if (*gc) {
            const auto entries = run_gradcheck_suite(seed, gc_tol, !gc_no_model);
            double worst = 0.0;
            bool ok = true;
            for (const auto& e : entries) {
                std::printf("%-24s max rel-err %.3e  %s\n", e.name.c_str(), e.report.max_error,
                            e.report.passed ? "ok" : "FAIL");
                worst = std::max(worst, e.report.max_error);
                ok = ok && e.report.passed;
            }
            std::printf("max rel-err %.3e over %zu checks (tolerance %.1e)\n", worst, entries.size(), gc_tol);
            return ok ? 0 : 1;
        } else if (*tt) {
            if (tt_steps) cfg.train.steps = *tt_steps;
            fs::create_directories(tt_out);
            const ToyCase tc = make_toy_case(cfg, seed);
            std::ofstream csv(fs::path(tt_out) / "loss.csv");
            if (!csv) throw IoError("cannot write " + (fs::path(tt_out) / "loss.csv").string());
            csv << train_log_csv_header();
            const ToyResult res = train_toy(cfg, tc, seed, [&](const TrainLogRow& r) {
                csv << train_log_csv_row(r);
                if (r.step % 100 == 0)
                    std::printf("step %5zu  total %.5f  manifold %.5f  ssa %.5f  edge %.5f\n", r.step, r.total,
                                r.manifold, r.ssa, r.edge);
            });
            csv.close();
            save_checkpoint(fs::path(tt_out) / "checkpoint", res.params, res.projector);
            write_pgmp(fs::path(tt_out) / "prediction.pgmp", image_to_pgmp(res.prediction));
            write_pgmp(fs::path(tt_out) / "input.pgmp", image_to_pgmp(tc.artifact));
            write_pgmp(fs::path(tt_out) / "target.pgmp", image_to_pgmp(tc.clean));
            nlohmann::ordered_json s;
            s["seed"] = seed;
            s["steps"] = cfg.train.steps;
            s["initial_manifold"] = res.initial_manifold;
            s["final_manifold"] = res.final_manifold;
            s["manifold_ratio"] = res.final_manifold / res.initial_manifold;
            s["psnr_input"] = res.psnr_input;
            s["psnr_prediction"] = res.psnr_pred;
            write_json(fs::path(tt_out) / "summary.json", s);
            std::printf("L_manifold %.5f -> %.5f (ratio %.4f); PSNR input %.2f dB, prediction %.2f dB\n",
                        res.initial_manifold, res.final_manifold, res.final_manifold / res.initial_manifold,
                        res.psnr_input, res.psnr_pred);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
