// Acceptance suite: one PASS/FAIL line per criterion with its runtime budget.
//
//   dmar_acceptance [--only 1,7,12] [--known-fail 13]
//
// --known-fail only masks a criterion whose failure the check itself marks as
// a documented deviation; any other failure still fails the run.

#include <omp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dmar/baselines.hpp"
#include "dmar/config.hpp"
#include "dmar/dataset.hpp"
#include "dmar/dmp_former.hpp"
#include "dmar/gradcheck_suite.hpp"
#include "dmar/metrics.hpp"
#include "dmar/parallel.hpp"
#include "dmar/pgmp_io.hpp"
#include "dmar/phantom.hpp"
#include "dmar/physics_model.hpp"
#include "dmar/projector.hpp"
#include "dmar/recon.hpp"
#include "dmar/rng.hpp"
#include "dmar/simulate.hpp"
#include "dmar/ssa_losses.hpp"
#include "dmar/stats.hpp"
#include "dmar/toy_training.hpp"

namespace fs = std::filesystem;
using namespace dmar;
using ad::Graph;
using ad::Tensor;
using ad::Var;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    bool documented_deviation = false;  // failure explained in the decisions notes
};

struct Criterion {
    int id;
    const char* title;
    double budget_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dmar_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------

Outcome beer_lambert_collapse() {
    const ProjectionGeometry geom{12, 20, 0.5, 0.5};
    SeqRng rng(11);
    std::array<Sinogram, 3> paths{Sinogram(geom, SinogramUnit::PathLength), Sinogram(geom, SinogramUnit::PathLength),
                                  Sinogram(geom, SinogramUnit::PathLength)};
    const std::array<double, 3> max_len{40.0, 12.0, 3.0};
    for (std::size_t m = 0; m < 3; ++m)
        for (auto& v : paths[m].data) v = rng.uniform(0.0, max_len[m]);

    double worst = 0.0;
    auto check = [&](const EnergySpectrum& s) {
        const double e = s.energies_kev.at(0);
        const Sinogram p = polychromatic_project(paths, s);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            double closed = 0.0;
            for (std::size_t m = 0; m < 3; ++m) closed += attenuation_mu(kPhantomMaterials[m], e) * paths[m].data[i];
            worst = std::max(worst, std::abs(p.data[i] - closed) / std::max(closed, 1e-300));
        }
    };
    check(EnergySpectrum::monochromatic(60.0));
    check(EnergySpectrum::monochromatic(33.3));
    const EnergySpectrum one = build_spectrum(120.0, 2.0, 1);
    if (one.size() != 1) return {false, "1-bin spectrum has " + std::to_string(one.size()) + " bins"};
    check(one);
    return {worst <= 1e-9, fmt("max rel err %.2e (tol 1e-9)", worst)};
}

// Center / rim mean of an FBP of a noiseless water disk.
double center_rim_ratio(bool polychromatic) {
    const std::size_t n = 256;
    const double pixel = 1.0;
    const Phantom ph = synthetic_phantom(PhantomKind::Disk, {n, n, 1}, {pixel, pixel, pixel}, 0);
    const MaskVolume none(ph.hu.dims, ph.hu.spacing_mm, 0);
    const MaterialMap mats = decompose_materials(ph.hu, none);
    const ProjectionGeometry geom = ProjectionGeometry::covering(n, n, pixel, 360);
    const auto paths = path_lengths(material_slice(mats, 0), geom);
    const EnergySpectrum spec = build_spectrum(120.0, 2.0, 50);
    const Sinogram p = polychromatic ? polychromatic_project(paths, spec)
                                     : monochromatic_project(paths, effective_energy(spec));
    ReconParams rp;
    rp.rows = rp.cols = n;
    rp.pixel_mm = pixel;
    const Image mu = fbp(p, rp);
    const double c = (n - 1) / 2.0, radius = 0.4 * n;
    double cs = 0, rs = 0;
    std::size_t cn = 0, rn = 0;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double r = std::hypot(x - c, y - c) / radius;
            if (r < 0.1) cs += mu(y, x), ++cn;
            if (r > 0.8 && r < 0.9) rs += mu(y, x), ++rn;
        }
    return (cs / cn) / (rs / rn);
}

Outcome cupping_direction() {
    const double poly = center_rim_ratio(true), mono = center_rim_ratio(false);
    return {poly < 0.97 && std::abs(mono - 1.0) <= 0.02,
            fmt("poly center/rim %.4f (< 0.97), mono %.4f (1 +- 0.02)", poly, mono)};
}

Outcome scatter_conservation() {
    const std::size_t n = 128;
    const Phantom ph = synthetic_phantom(PhantomKind::Disk, {n, n, 1}, {1.0, 1.0, 1.0}, 0);
    const MaskVolume none(ph.hu.dims, ph.hu.spacing_mm, 0);
    // Air margin of 80 bins (8 sigma) on both sides of the object shadow, so
    // the interior band below holds every exchange of scattered energy.
    ProjectionGeometry geom = ProjectionGeometry::covering(n, n, 1.0, 180);
    geom.n_detectors += 160;
    const auto paths = path_lengths(material_slice(decompose_materials(ph.hu, none), 0), geom);
    const Sinogram primary = intensity_from_projection(monochromatic_project(paths, 60.0));
    NoiseParams np;
    np.spr = 0.1;
    np.sigma_scatter_px = 10.0;
    const Sinogram total = apply_scatter(primary, np);
    // Interior: detector bins more than 4 sigma from either edge, all angles.
    const std::size_t margin = static_cast<std::size_t>(4 * np.sigma_scatter_px);
    double added = 0, prim = 0;
    for (std::size_t a = 0; a < geom.n_angles; ++a)
        for (std::size_t d = margin; d + margin < geom.n_detectors; ++d) {
            added += total(a, d) - primary(a, d);
            prim += primary(a, d);
        }
    const double ratio = added / prim;
    return {std::abs(ratio / np.spr - 1.0) <= 0.02, fmt("added/primary %.5f vs SPR 0.1 (+-2%%)", ratio)};
}

Outcome poisson_statistics() {
    const ProjectionGeometry geom{100, 1000, 0.5, 0.5};
    const Sinogram p(geom, SinogramUnit::LogProjection, 0.8);
    NoiseParams np;
    np.n0 = 5e5;
    const Sinogram counts = apply_photon_noise(p, np, 2024);
    const double n = static_cast<double>(counts.data.size());
    const double mean = std::accumulate(counts.data.begin(), counts.data.end(), 0.0) / n;
    const double lambda = np.n0 * std::exp(-0.8);
    const double sigma = std::sqrt(lambda / n);
    double var = 0;
    for (double v : counts.data) var += (v - mean) * (v - mean);
    var /= n - 1;
    return {std::abs(mean - lambda) <= 3 * sigma,
            fmt("mean %.2f vs %.2f, |z| = %.2f (<= 3); var/mean %.4f over %.0f draws", mean, lambda,
                std::abs(mean - lambda) / sigma, var / mean, n)};
}

Outcome disk_oracle() {
    const std::size_t n = 256;
    const double pixel = 0.5, mu = 0.02, radius = 50.0;
    const ProjectionGeometry geom = ProjectionGeometry::covering(n, n, pixel, 360);
    Sinogram s(geom, SinogramUnit::LogProjection);
    for (std::size_t a = 0; a < geom.n_angles; ++a)
        for (std::size_t d = 0; d < geom.n_detectors; ++d) {
            const double t = geom.detector_offset(d);
            s(a, d) = std::abs(t) < radius ? 2.0 * mu * std::sqrt(radius * radius - t * t) : 0.0;
        }
    ReconParams rp;
    rp.rows = rp.cols = n;
    rp.pixel_mm = pixel;
    const Image img = fbp(s, rp);
    const double c = (n - 1) / 2.0;
    double worst = 0, sum = 0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x)
            if (std::hypot(x - c, y - c) * pixel < radius / 2) {
                worst = std::max(worst, std::abs(img(y, x) / mu - 1.0));
                sum += img(y, x);
                ++count;
            }
    return {worst <= 0.05, fmt("inner half-radius: mean %.5f mm^-1, worst pixel %.2f%% off (<= 5%%)", sum / count,
                               100 * worst)};
}

Outcome zone_compliance() {
    std::size_t plans = 0, voxels = 0, violations = 0, zone_errors = 0;
    std::map<std::string, std::size_t> per_state;
    for (std::uint64_t ps = 0; ps < 10; ++ps) {
        const Phantom ph = synthetic_phantom(PhantomParams{}, 500 + ps);
        const auto teeth = analyze_teeth(ph.labels);
        for (std::uint64_t k = 0; k < 100; ++k, ++plans) {
            const RestorationPlan plan = plan_restorations(ph.labels, ps * 1000 + k, Prevalence{{0.2, 0.2, 0.2, 0.2, 0.2}});
            for (const auto& tp : plan.teeth) {
                if (tp.state == RestorationState::Sound) continue;
                // Windows as stated: implant 0-0.60 h, crown/bridge 0.40-1.0 h, filling 0.40-0.95 h.
                const double lo = tp.state == RestorationState::Implant ? 0.0 : 0.40;
                const double hi = tp.state == RestorationState::Implant ? 0.60
                                  : tp.state == RestorationState::Filled ? 0.95
                                                                          : 1.0;
                if (tp.zone_lo < lo || tp.zone_hi > hi || tp.zone_lo > tp.zone_hi) ++zone_errors;
                const auto it = std::find_if(teeth.begin(), teeth.end(), [&](const auto& t) { return t.fdi == tp.fdi; });
                const auto vox = rasterize_restoration(tp, *it, ph.labels);
                const std::size_t plane = ph.labels.nx() * ph.labels.ny();
                for (auto v : vox) {
                    const std::size_t z = v / plane;
                    const double frac = (static_cast<double>(z) - static_cast<double>(it->z_lo) + 0.5) /
                                        static_cast<double>(it->height());
                    if (z < it->z_lo || z > it->z_hi || frac < lo || frac > hi) ++violations;
                }
                voxels += vox.size();
                per_state[std::string(state_name(tp.state))] += vox.size();
            }
        }
    }
    std::string states;
    for (const auto& [k, v] : per_state) states += " " + k + "=" + std::to_string(v);
    return {violations == 0 && zone_errors == 0 && voxels > 0,
            fmt("%zu plans, %zu metal voxels, %zu violations, %zu zone errors;", plans, voxels, violations,
                zone_errors) + states};
}

Outcome baseline_ordering() {
    Config cfg = parse_config("{}");
    cfg.prevalence = Prevalence::only(RestorationState::Implant);
    const std::size_t n = 60;
    std::vector<double> in(n), li(n), nmar(n);
    std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            const GeneratedCase c = generate_case(cfg, 7000 + k, "implant");
            const auto& p = c.pair;
            const Image ref = p.clean.slice(0);
            const Mask2 metal = p.metal_mask.slice(0);
            const MetricWindow w;
            auto score = [&](const Image& img) {
                return psnr(prepare_for_metrics(img, ref, &metal, w), prepare_for_metrics(ref, ref, &metal, w), w.range());
            };
            ReconParams rp;
            rp.filter = cfg.simulation.filter;
            rp.rows = ref.rows;
            rp.cols = ref.cols;
            rp.pixel_mm = ref.spacing_mm;
            NmarParams np;
            np.thresholds = cfg.simulation.thresholds;
            np.mu_water = p.mu_water;
            const MetalTrace trace = metal_trace(p.sinograms[0].metal_path);
            in[k] = score(p.artifact.slice(0));
            li[k] = score(mar_reconstruct(p.sinograms[0].artifact, trace, MarMethod::Li, rp, np));
            nmar[k] = score(mar_reconstruct(p.sinograms[0].artifact, trace, MarMethod::Nmar, rp, np));
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) return {false, "case failed: " + e};
    const double mi = median_of(in), ml = median_of(li), mn = median_of(nmar);
    return {ml > mi && mn >= ml,
            fmt("%zu implant slices, median PSNR input %.2f < LI %.2f <= NMAR %.2f dB", n, mi, ml, mn)};
}

Outcome identity_at_init() {
    const DmpConfig cfg;
    const DmpParams<double> params = init_dmp_params(cfg, 3);
    Graph<double> g;
    const DmpVars v = bind_params(g, params, false);
    SeqRng rng(5);
    Tensor<double> h({cfg.n_tokens(), cfg.dim}), c({1, cfg.dim});
    for (auto& x : h.data) x = rng.normal();
    for (auto& x : c.data) x = rng.normal();
    TokenGrid tg{g.constant(h), grid_positions(cfg)};
    const Var cond = g.constant(c);
    for (std::size_t l = 0; l < cfg.depth; ++l) tg.tokens = dmp_block(g, tg, cond, v.blocks[l], cfg);
    double worst = 0;
    for (std::size_t i = 0; i < h.size(); ++i) worst = std::max(worst, std::abs(g.value(tg.tokens)[i] - h[i]));
    return {worst <= 1e-6, fmt("%zu blocks, max |h_L - h_0| = %.2e (<= 1e-6)", cfg.depth, worst)};
}

Outcome rope_shift_invariance() {
    const DmpConfig cfg;
    const DmpParams<double> params = init_dmp_params(cfg, 9);
    SeqRng rng(13);
    Tensor<double> h({cfg.n_tokens(), cfg.dim});
    for (auto& x : h.data) x = rng.normal();
    auto probs_at = [&](double dr, double dc) {
        Graph<double> g;
        const DmpVars v = bind_params(g, params, false);
        auto pos = grid_positions(cfg);
        for (auto& p : pos) p = {p[0] + dr, p[1] + dc};
        std::vector<Tensor<double>> probs;
        rope_attention(g, TokenGrid{g.constant(h), pos}, v.blocks[0], cfg, &probs);
        return probs;
    };
    const auto base = probs_at(0, 0);
    double worst = 0;
    for (auto [dr, dc] : {std::pair{3.0, -7.0}, {-11.5, 2.25}, {100.0, 100.0}}) {
        const auto shifted = probs_at(dr, dc);
        for (std::size_t hd = 0; hd < base.size(); ++hd)
            for (std::size_t i = 0; i < base[hd].size(); ++i)
                worst = std::max(worst, std::abs(base[hd][i] - shifted[hd][i]));
    }
    return {worst <= 1e-5 && !base.empty(), fmt("%zu heads, 3 offsets, max |dP| = %.2e (<= 1e-5)", base.size(), worst)};
}

Outcome gradcheck_all() {
    const auto entries = run_gradcheck_suite(0);
    double worst = 0;
    std::string failed;
    std::size_t checked = 0;
    for (const auto& e : entries) {
        worst = std::max(worst, e.report.max_error);
        checked += e.report.checked;
        if (!e.report.passed) failed += " " + e.name;
    }
    return {failed.empty(), fmt("%zu checks, %zu elements, max rel-err %.2e (< 1e-4)", entries.size(), checked, worst) +
                                (failed.empty() ? "" : "; failed:" + failed)};
}

Outcome loss_fixed_point() {
    const std::size_t side = 64;
    const TeacherStub<double> teacher(7, 16);
    SeqRng rng(17);
    Image gt(side, side, 1.0);
    for (auto& v : gt.data) v = rng.uniform(-1000.0, 2500.0);
    const Tensor<double> x = to_network<double>(gt);
    const Tensor<double> tf = teacher_features(gt, teacher);
    Mask2 roi(side, side, 1.0, 0);
    for (std::size_t r = 10; r < 50; ++r) roi(r, 30) = roi(30, r) = 1;
    roi = dilate(roi, 3);

    Graph<double> g;
    const Var xv = g.constant(x);
    const LossTerms fp = total_loss(g, xv, xv, g.constant(tf), g.constant(tf), roi);
    const double fixed = g.value(fp.total)[0];

    Tensor<double> pred = x, sp = tf;
    for (auto& v : pred.data) v += rng.uniform(-0.2, 0.2);
    for (auto& v : sp.data) v = rng.normal();
    const LossTerms t = total_loss(g, g.constant(pred), xv, g.constant(sp), g.constant(tf), roi);
    const double tot = g.value(t.total)[0], m = g.value(t.manifold)[0], s = g.value(t.ssa)[0], e = g.value(t.edge)[0];
    const double gap = std::abs(tot - (m + 0.2 * s + 0.1 * e));
    return {std::abs(fixed) <= 1e-6 && gap <= 1e-9,
            fmt("L_total(x,x) = %.2e (+-1e-6); |total - (m + 0.2 s + 0.1 e)| = %.2e (<= 1e-9)", fixed, gap)};
}

Outcome toy_training() {
    const Config cfg = parse_config("{}");
    const ToyCase tc = make_toy_case(cfg, 1);
    const ToyResult r = train_toy(cfg, tc, 1);
    const double ratio = r.final_manifold / r.initial_manifold;
    const auto ma = moving_average_total(r.log, 100);
    double worst_rise = 0;
    for (std::size_t i = 1; i < ma.size(); ++i) worst_rise = std::max(worst_rise, ma[i] - ma[i - 1]);
    return {ratio < 0.1 && r.psnr_pred > r.psnr_input,
            fmt("%zu steps (f32, d %zu, L %zu, lr %.0e): L_manifold %.4f -> %.2e (ratio %.2e < 0.1); PSNR y %.2f -> "
                "x_pred %.2f dB; max 100-step MA rise %.1e",
                cfg.train.steps, cfg.model.dim, cfg.model.depth, cfg.train.lr, r.initial_manifold, r.final_manifold,
                ratio, r.psnr_input, r.psnr_pred, worst_rise)};
}

// Two-sided exact p by enumerating every subset of size na (bitmask order) and
// counting pairwise wins.
double brute_force_mw_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    const std::size_t n = pooled.size(), na = a.size();
    auto u_of = [&](std::uint32_t mask) {
        double u = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u)
                for (std::size_t j = 0; j < n; ++j)
                    if (!(mask >> j & 1u)) u += pooled[i] > pooled[j] ? 1.0 : (pooled[i] == pooled[j] ? 0.5 : 0.0);
        return u;
    };
    const double mu = static_cast<double>(na * b.size()) / 2.0;
    const double obs = std::abs(u_of((1u << na) - 1u) - mu);
    std::size_t total = 0, extreme = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != na) continue;
        ++total;
        if (std::abs(u_of(mask) - mu) >= obs - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

Outcome statistics() {
    SeqRng rng(99);
    double worst = 0;
    std::size_t cases = 0;
    for (std::size_t na = 1; na <= 6; ++na)
        for (std::size_t nb = 1; nb <= 6; ++nb)
            for (int rep = 0; rep < 4; ++rep) {
                std::vector<double> a(na), b(nb);
                // Alternate continuous draws and coarse integers (ties).
                for (auto& v : a) v = rep % 2 ? std::floor(rng.uniform(0, 4)) : rng.uniform(0, 1);
                for (auto& v : b) v = rep % 2 ? std::floor(rng.uniform(0, 4)) + (rep == 3 ? 1 : 0) : rng.uniform(0.2, 1.2);
                const auto r = mann_whitney_u(a, b);
                if (!r.exact) return {false, "mann_whitney_u did not use the exact path"};
                worst = std::max(worst, std::abs(r.p - brute_force_mw_p(a, b)));
                ++cases;
            }
    const bool mw_ok = worst <= 1e-12;
    const double h = kruskal_wallis({{1, 2}, {3, 4}, {5, 6}}).h;
    const double stated = 25.0 / 7.0, closed = 32.0 / 7.0;  // closed form: 12/(6*7)*(9+49+121)/2 - 21
    const bool kw_ok = std::abs(h - stated) <= 1e-9;
    Outcome o;
    o.pass = mw_ok && kw_ok;
    o.detail = fmt("MW exact p vs enumeration over %zu samples (n <= 6): max |dp| %.1e; KW H = %.6f vs stated 25/7 = "
                   "%.6f%s (closed form 32/7 = %.6f, |H - 32/7| = %.1e)",
                   cases, worst, h, stated, kw_ok ? "" : " MISMATCH", closed, std::abs(h - closed));
    o.documented_deviation = mw_ok && !kw_ok && std::abs(h - closed) <= 1e-12;
    return o;
}

std::string hash_tree(const fs::path& root, std::vector<std::pair<std::string, std::vector<std::uint8_t>>>& files) {
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : paths) {
        auto bytes = read_file_bytes(p);
        const std::string rel = fs::relative(p, root).string();
        for (char c : rel) h = (h ^ static_cast<std::uint8_t>(c)) * 1099511628211ULL;
        for (auto b : bytes) h = (h ^ b) * 1099511628211ULL;
        files.emplace_back(rel, std::move(bytes));
    }
    return fmt("%016llx", static_cast<unsigned long long>(h));
}

Outcome reproducibility() {
    const Config cfg = parse_config("{}");
    const int saved = num_threads();
    std::vector<std::string> hashes;
    std::vector<std::vector<std::pair<std::string, std::vector<std::uint8_t>>>> trees(3);
    const int threads[3] = {8, 8, 1};
    for (int run = 0; run < 3; ++run) {
        const fs::path dir = scratch("repro_" + std::to_string(run));
        set_num_threads(threads[run]);
        gen_dataset(cfg, 10, 42, dir);
        hashes.push_back(hash_tree(dir, trees[run]));
        fs::remove_all(dir);
    }
    set_num_threads(saved);
    const bool same_runs = trees[0] == trees[1];
    const bool same_threads = trees[0] == trees[2];
    return {same_runs && same_threads && trees[0].size() > 10,
            fmt("10 cases, %zu files; run A %s, run B %s (threads 8), run C %s (threads 1)", trees[0].size(),
                hashes[0].c_str(), hashes[1].c_str(), hashes[2].c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only, known;
    auto parse_list = [](const char* s, std::set<int>& out) {
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) out.insert(std::stoi(item));
    };
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--only") && i + 1 < argc) parse_list(argv[++i], only);
        else if (!std::strcmp(argv[i], "--known-fail") && i + 1 < argc) parse_list(argv[++i], known);
        else {
            std::fprintf(stderr, "usage: %s [--only 1,2] [--known-fail 13]\n", argv[0]);
            return 2;
        }
    }

    const std::vector<Criterion> all{
        {1, "Physics: Beer-Lambert collapse", 1, beer_lambert_collapse},
        {2, "Physics: cupping direction", 30, cupping_direction},
        {3, "Physics: scatter conservation", 1, scatter_conservation},
        {4, "Physics: Poisson statistics", 5, poisson_statistics},
        {5, "Recon: disk oracle", 10, disk_oracle},
        {6, "Planner: zone compliance", 30, zone_compliance},
        {7, "Baselines: input < LI <= NMAR ordering", 600, baseline_ordering},
        {8, "Network: identity at init", 1, identity_at_init},
        {9, "Network: RoPE shift invariance", 1, rope_shift_invariance},
        {10, "Autodiff: gradcheck", 120, gradcheck_all},
        {11, "Losses: fixed point and weights", 1, loss_fixed_point},
        {12, "Toy training: x-prediction end-to-end", 900, toy_training},
        {13, "Statistics: Mann-Whitney exact, Kruskal-Wallis", 30, statistics},
        {14, "Reproducibility: gen-dataset bytes", 300, reproducibility},
    };

    std::size_t passed = 0, failed = 0, masked = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = dt <= c.budget_s;
        const bool ok = o.pass && in_time;
        const char* tag = ok ? "PASS" : "FAIL";
        if (ok) ++passed;
        else if (known.count(c.id) && o.documented_deviation && in_time) ++masked;
        else ++failed;
        std::printf("[%2d] %s  %-48s %8.2f s / %4.0f s%s  %s%s\n", c.id, tag, c.title, dt, c.budget_s,
                    in_time ? "" : " (over budget)", o.detail.c_str(),
                    !ok && known.count(c.id) && o.documented_deviation ? "  [known deviation]" : "");
        std::fflush(stdout);
    }
    std::printf("acceptance: %zu passed, %zu failed, %zu known deviation(s)\n", passed, failed, masked);
    return failed == 0 ? 0 : 1;
}
