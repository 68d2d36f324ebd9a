#include "dmar/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dmar/baselines.hpp"
#include "dmar/error.hpp"
#include "dmar/metrics.hpp"
#include "dmar/pgmp_io.hpp"
#include "dmar/rng.hpp"

namespace dmar {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
    write_file_bytes(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

ojson finite_or_string(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

std::string sino_name(const char* kind, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "sino_%s_%02zu.pgmp", kind, i);
    return buf;
}

ojson plan_json(const RestorationPlan& plan) {
    ojson teeth = ojson::array();
    for (const auto& t : plan.teeth) {
        const auto& s = t.shape;
        teeth.push_back({{"fdi", t.fdi},
                         {"state", std::string(state_name(t.state))},
                         {"zone_lo", t.zone_lo},
                         {"zone_hi", t.zone_hi},
                         {"shape",
                          {{"base_radius_mm", s.base_radius_mm},
                           {"taper", s.taper},
                           {"thread_amplitude", s.thread_amplitude},
                           {"thread_pitch_slices", s.thread_pitch_slices},
                           {"cap_thickness_mm", s.cap_thickness_mm},
                           {"blob_seed", s.blob_seed},
                           {"blob_exponent", s.blob_exponent},
                           {"blob_scale", s.blob_scale},
                           {"blob_offset_x", s.blob_offset_x},
                           {"blob_offset_y", s.blob_offset_y}}}});
    }
    return {{"teeth", teeth}};
}

}  // namespace

CaseSeeds CaseSeeds::derive(std::uint64_t case_seed) {
    return {mix64(case_seed ^ 0x9A4701ULL), mix64(case_seed ^ 0x91A4ULL), mix64(case_seed ^ 0x4015EULL)};
}

std::string plan_to_json(const RestorationPlan& plan) { return plan_json(plan).dump(2) + "\n"; }

GeneratedCase generate_case(const Config& config, std::uint64_t case_seed, const std::string& case_id) {
    config.validate();
    const CaseSeeds seeds = CaseSeeds::derive(case_seed);
    GeneratedCase c;
    c.case_id = case_id;
    c.seed = case_seed;
    c.phantom = synthetic_phantom(config.phantom, seeds.phantom);
    c.plan = plan_restorations(c.phantom.labels, seeds.plan, config.prevalence);
    c.pair = simulate_case(c.phantom, c.plan, config.simulation, seeds.noise, config.slices);
    return c;
}

void write_case(const GeneratedCase& c, const Config& config, const fs::path& dir) {
    fs::create_directories(dir);
    const auto& p = c.pair;
    write_pgmp(dir / "clean.pgmp", volume_to_pgmp(p.clean));
    write_pgmp(dir / "artifact.pgmp", volume_to_pgmp(p.artifact));
    write_pgmp(dir / "metal_mask.pgmp", mask_to_pgmp(p.metal_mask));
    write_pgmp(dir / "edge.pgmp", mask_to_pgmp(p.edge));
    write_text(dir / "plan.json", plan_to_json(c.plan));

    const CaseSeeds seeds = CaseSeeds::derive(c.seed);
    ojson m;
    m["format"] = "dmar-case";
    m["version"] = kManifestVersion;
    m["case_id"] = c.case_id;
    m["seed"] = c.seed;
    m["seeds"] = {{"phantom", seeds.phantom}, {"plan", seeds.plan}, {"noise", seeds.noise}};
    const auto& hu = c.phantom.hu;
    m["phantom"] = {{"kind", std::string(phantom_kind_name(config.phantom.kind))},
                    {"dims", {hu.nx(), hu.ny(), hu.nz()}},
                    {"spacing_mm", {hu.spacing_mm[0], hu.spacing_mm[1], hu.spacing_mm[2]}}};
    const auto& sim = config.simulation;
    m["geometry"] = {{"n_angles", sim.geometry.n_angles},
                     {"n_detectors", sim.geometry.n_detectors},
                     {"detector_spacing_mm", sim.geometry.detector_spacing_mm},
                     {"step_fraction", sim.geometry.step_fraction}};
    m["spectrum"] = {{"kvp", sim.spectrum.kvp},
                     {"filtration_mm_al", sim.spectrum.filtration_mm_al},
                     {"bins", sim.spectrum.bins},
                     {"polychromatic", sim.polychromatic}};
    m["noise"] = {{"n0", sim.noise.n0},
                  {"n_min", sim.noise.n_min},
                  {"sigma_e", sim.noise.sigma_e},
                  {"spr", sim.noise.spr},
                  {"sigma_scatter_px", sim.noise.sigma_scatter_px},
                  {"photon_noise", sim.photon_noise}};
    m["slices"] = p.slices;
    m["effective_energy_kev"] = p.effective_energy_kev;
    m["mu_water"] = p.mu_water;
    ojson teeth = ojson::array();
    for (const auto& t : c.plan.teeth)
        teeth.push_back({{"fdi", t.fdi}, {"state", std::string(state_name(t.state))}, {"zone_lo", t.zone_lo},
                         {"zone_hi", t.zone_hi}});
    m["plan"] = teeth;

    ojson sinos = ojson::array(), areas = ojson::array(), metrics = ojson::array();
    const MetricWindow w = config.eval.window;
    for (std::size_t i = 0; i < p.slices.size(); ++i) {
        const auto& s = p.sinograms[i];
        write_sinogram(dir / sino_name("clean", i), s.clean);
        write_sinogram(dir / sino_name("artifact", i), s.artifact);
        write_sinogram(dir / sino_name("metal", i), s.metal_path);
        sinos.push_back({{"clean", sino_name("clean", i)},
                         {"artifact", sino_name("artifact", i)},
                         {"metal_path", sino_name("metal", i)}});
        const Mask2 metal = p.metal_mask.slice(i);
        const Image ref = p.clean.slice(i);
        const Image a = prepare_for_metrics(p.artifact.slice(i), ref, &metal, w);
        const Image r = prepare_for_metrics(ref, ref, &metal, w);
        std::size_t area = 0;
        for (auto v : metal.data) area += v ? 1 : 0;
        areas.push_back(area);
        metrics.push_back({{"psnr", finite_or_string(psnr(a, r, w.range()))}, {"ssim", ssim(a, r, w.range())}});
    }
    m["metal_area_px"] = areas;
    m["input_metrics"] = metrics;
    m["files"] = {{"clean", "clean.pgmp"},
                  {"artifact", "artifact.pgmp"},
                  {"metal_mask", "metal_mask.pgmp"},
                  {"edge", "edge.pgmp"},
                  {"plan", "plan.json"},
                  {"sinograms", sinos}};
    m["config"] = ojson::parse(config_to_json(config, -1));
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void gen_dataset(const Config& config, std::size_t n, std::uint64_t seed, const fs::path& out) {
    config.validate();
    fs::create_directories(out);
    std::vector<std::string> ids(n), errors(n);
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "case_%04zu", i);
        ids[i] = buf;
    }
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
            const GeneratedCase c = generate_case(config, seed + i, ids[i]);
            write_case(c, config, out / ids[i]);
        } catch (const std::exception& e) {
            errors[i] = ids[i] + ": " + e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw NumericError("gen_dataset: " + e);

    ojson idx;
    idx["format"] = "dmar-dataset";
    idx["version"] = kManifestVersion;
    idx["seed"] = seed;
    idx["n_cases"] = n;
    ojson cases = ojson::array();
    for (std::size_t i = 0; i < n; ++i)
        cases.push_back({{"case_id", ids[i]}, {"seed", seed + i}, {"manifest", ids[i] + "/manifest.json"}});
    idx["cases"] = cases;
    write_text(out / "index.json", idx.dump(2) + "\n");
}

void regenerate_case(const fs::path& manifest_path, const fs::path& out_dir) {
    const std::string text = read_text(manifest_path);
    if (const auto problems = validate_manifest(text); !problems.empty())
        throw IoError("invalid manifest " + manifest_path.string() + ": " + problems.front());
    const json m = json::parse(text);
    const Config config = parse_config(m["config"].dump());
    const GeneratedCase c = generate_case(config, m["seed"].get<std::uint64_t>(), m["case_id"].get<std::string>());
    write_case(c, config, out_dir);
}

std::vector<std::string> validate_manifest(const std::string& json_text, const fs::path& case_dir) {
    std::vector<std::string> errs;
    json m;
    try {
        m = json::parse(json_text);
    } catch (const std::exception& e) {
        return {std::string("not valid JSON: ") + e.what()};
    }
    if (!m.is_object()) return {"top level must be an object"};

    auto need = [&](const json& obj, const std::string& key, const std::string& path, auto pred,
                    const char* type) -> const json* {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!obj.contains(key)) {
            errs.push_back(full + ": missing");
            return nullptr;
        }
        if (!pred(obj[key])) {
            errs.push_back(full + ": expected " + type);
            return nullptr;
        }
        return &obj[key];
    };
    const auto is_str = [](const json& v) { return v.is_string(); };
    const auto is_uint = [](const json& v) { return v.is_number_unsigned(); };
    const auto is_num = [](const json& v) { return v.is_number(); };
    const auto is_obj = [](const json& v) { return v.is_object(); };
    const auto is_arr = [](const json& v) { return v.is_array(); };
    const auto is_metric = [](const json& v) { return v.is_number() || v.is_string(); };

    if (const auto* f = need(m, "format", "", is_str, "string"); f && *f != "dmar-case")
        errs.push_back("format: expected \"dmar-case\"");
    if (const auto* v = need(m, "version", "", is_uint, "unsigned integer"); v && *v != kManifestVersion)
        errs.push_back("version: unsupported");
    need(m, "case_id", "", is_str, "string");
    need(m, "seed", "", is_uint, "unsigned integer");
    if (const auto* s = need(m, "seeds", "", is_obj, "object"))
        for (const char* k : {"phantom", "plan", "noise"}) need(*s, k, "seeds", is_uint, "unsigned integer");
    if (const auto* ph = need(m, "phantom", "", is_obj, "object")) {
        need(*ph, "kind", "phantom", is_str, "string");
        if (const auto* d = need(*ph, "dims", "phantom", is_arr, "array"); d && d->size() != 3)
            errs.push_back("phantom.dims: expected 3 entries");
        if (const auto* d = need(*ph, "spacing_mm", "phantom", is_arr, "array"); d && d->size() != 3)
            errs.push_back("phantom.spacing_mm: expected 3 entries");
    }
    for (const char* k : {"geometry", "spectrum", "noise"}) need(m, k, "", is_obj, "object");
    std::size_t n_slices = 0;
    if (const auto* s = need(m, "slices", "", is_arr, "array")) {
        n_slices = s->size();
        if (n_slices == 0) errs.push_back("slices: empty");
        for (const auto& z : *s)
            if (!z.is_number_unsigned()) errs.push_back("slices: entries must be unsigned integers");
    }
    if (const auto* e = need(m, "effective_energy_kev", "", is_num, "number"); e && !(e->get<double>() > 0))
        errs.push_back("effective_energy_kev: must be positive");
    if (const auto* e = need(m, "mu_water", "", is_num, "number"); e && !(e->get<double>() > 0))
        errs.push_back("mu_water: must be positive");
    if (const auto* plan = need(m, "plan", "", is_arr, "array"))
        for (std::size_t i = 0; i < plan->size(); ++i) {
            const std::string p = "plan[" + std::to_string(i) + "]";
            const json& t = (*plan)[i];
            if (!t.is_object()) {
                errs.push_back(p + ": expected object");
                continue;
            }
            need(t, "fdi", p, is_uint, "unsigned integer");
            if (const auto* st = need(t, "state", p, is_str, "string")) {
                try {
                    parse_state(st->get<std::string>());
                } catch (const std::exception&) {
                    errs.push_back(p + ".state: unknown state");
                }
            }
            const auto* lo = need(t, "zone_lo", p, is_num, "number");
            const auto* hi = need(t, "zone_hi", p, is_num, "number");
            if (lo && hi && !(0.0 <= lo->get<double>() && lo->get<double>() <= hi->get<double>() && hi->get<double>() <= 1.0))
                errs.push_back(p + ": zone must satisfy 0 <= zone_lo <= zone_hi <= 1");
        }
    if (const auto* a = need(m, "metal_area_px", "", is_arr, "array"); a && a->size() != n_slices)
        errs.push_back("metal_area_px: one entry per slice required");
    if (const auto* im = need(m, "input_metrics", "", is_arr, "array")) {
        if (im->size() != n_slices) errs.push_back("input_metrics: one entry per slice required");
        for (const auto& e : *im)
            if (!e.is_object() || !e.contains("psnr") || !is_metric(e["psnr"]) || !e.contains("ssim") ||
                !e["ssim"].is_number())
                errs.push_back("input_metrics: entries need numeric psnr and ssim");
    }
    std::vector<std::string> files;
    if (const auto* f = need(m, "files", "", is_obj, "object")) {
        for (const char* k : {"clean", "artifact", "metal_mask", "edge", "plan"})
            if (const auto* v = need(*f, k, "files", is_str, "string")) files.push_back(v->get<std::string>());
        if (const auto* s = need(*f, "sinograms", "files", is_arr, "array")) {
            if (s->size() != n_slices) errs.push_back("files.sinograms: one entry per slice required");
            for (std::size_t i = 0; i < s->size(); ++i)
                for (const char* k : {"clean", "artifact", "metal_path"})
                    if (const auto* v = need((*s)[i], k, "files.sinograms[" + std::to_string(i) + "]", is_str, "string")) {
                        files.push_back(v->get<std::string>());
                        files.push_back(v->get<std::string>() + ".json");
                    }
        }
    }
    if (const auto* c = need(m, "config", "", is_obj, "object")) {
        try {
            parse_config(c->dump());
        } catch (const ConfigError& e) {
            errs.push_back(std::string("config.") + e.what());
        }
    }
    if (!case_dir.empty())
        for (const auto& f : files)
            if (!fs::exists(case_dir / f)) errs.push_back("files: " + f + " does not exist");
    return errs;
}

LoadedSlice load_case_slice(const fs::path& case_dir, std::size_t index) {
    const json m = json::parse(read_text(case_dir / "manifest.json"));
    const auto& f = m.at("files");
    const auto spacing = m.at("phantom").at("spacing_mm").get<std::array<double, 3>>();
    const Volume clean = volume_from_pgmp(read_pgmp(case_dir / f.at("clean").get<std::string>()), spacing);
    const Volume artifact = volume_from_pgmp(read_pgmp(case_dir / f.at("artifact").get<std::string>()), spacing);
    const MaskVolume metal = mask_from_pgmp(read_pgmp(case_dir / f.at("metal_mask").get<std::string>()), spacing);
    const MaskVolume edge = mask_from_pgmp(read_pgmp(case_dir / f.at("edge").get<std::string>()), spacing);
    if (index >= clean.nz()) throw RangeError("load_case_slice: slice index out of range");
    LoadedSlice s;
    s.case_id = m.at("case_id").get<std::string>();
    s.clean = clean.slice(index);
    s.artifact = artifact.slice(index);
    s.metal = metal.slice(index);
    s.edge = edge.slice(index);
    const auto& sf = f.at("sinograms").at(index);
    s.sinograms.clean = read_sinogram(case_dir / sf.at("clean").get<std::string>());
    s.sinograms.artifact = read_sinogram(case_dir / sf.at("artifact").get<std::string>());
    s.sinograms.metal_path = read_sinogram(case_dir / sf.at("metal_path").get<std::string>());
    s.mu_water = m.at("mu_water").get<double>();
    return s;
}

std::vector<fs::path> dataset_cases(const fs::path& dataset) {
    const json idx = json::parse(read_text(dataset / "index.json"));
    if (idx.value("format", "") != "dmar-dataset") throw IoError("not a dataset index: " + (dataset / "index.json").string());
    std::vector<fs::path> out;
    for (const auto& c : idx.at("cases")) out.push_back((dataset / c.at("manifest").get<std::string>()).parent_path());
    return out;
}

std::vector<EvalCase> eval_cases_from_dataset(const fs::path& dataset, const std::vector<std::string>& methods) {
    const auto dirs = dataset_cases(dataset);
    std::vector<EvalCase> out(dirs.size());
    std::vector<std::string> errors(dirs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(dirs.size()); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
            const LoadedSlice s = load_case_slice(dirs[i]);
            const json m = json::parse(read_text(dirs[i] / "manifest.json"));
            const Config cfg = parse_config(m.at("config").dump());
            ReconParams recon;
            recon.filter = cfg.simulation.filter;
            recon.rows = s.clean.rows;
            recon.cols = s.clean.cols;
            recon.pixel_mm = s.clean.spacing_mm;
            NmarParams np;
            np.thresholds = cfg.simulation.thresholds;
            np.mu_water = s.mu_water;
            const MetalTrace trace = metal_trace(s.sinograms.metal_path);

            EvalCase e;
            e.case_id = s.case_id;
            e.reference = s.clean;
            e.metal = s.metal;
            for (const auto& name : methods) {
                if (name == "input") {
                    e.outputs.emplace_back(name, s.artifact);
                } else if (name.rfind("file:", 0) == 0) {
                    const auto t = read_pgmp(dirs[i] / (name.substr(5) + ".pgmp"));
                    Image img = t.dims.size() == 3 ? volume_from_pgmp(t, {s.clean.spacing_mm, s.clean.spacing_mm, 1.0}).slice(0)
                                                   : image_from_pgmp(t, s.clean.spacing_mm);
                    if (!img.same_shape(s.clean)) throw ShapeError(name + ": shape differs from the reference");
                    e.outputs.emplace_back(name, std::move(img));
                } else {
                    e.outputs.emplace_back(name, mar_reconstruct(s.sinograms.artifact, trace, parse_mar_method(name),
                                                                 recon, np));
                }
            }
            out[i] = std::move(e);
        } catch (const std::exception& ex) {
            errors[i] = dirs[i].string() + ": " + ex.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw IoError("eval: " + e);
    return out;
}

}  // namespace dmar
