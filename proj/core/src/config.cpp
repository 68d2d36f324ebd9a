#include "dmar/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dmar/error.hpp"

namespace dmar {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

// Walks one JSON object, handing each known key to a reader and rejecting the rest.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class F>
    Section& key(const std::string& name, F&& read) {
        known_.push_back(name);
        if (auto it = j_.find(name); it != j_.end()) {
            const std::string p = join(path_, name);
            try {
                read(*it, p);
            } catch (const json::exception& e) {
                throw ConfigError(p, std::string("wrong type: ") + e.what());
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception& e) {
                throw ConfigError(p, e.what());
            }
        }
        return *this;
    }

    template <class T>
    Section& value(const std::string& name, T& out) {
        return key(name, [&](const json& v, const std::string& p) { out = get<T>(v, p); });
    }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (std::find(known_.begin(), known_.end(), it.key()) == known_.end())
                throw ConfigError(join(path_, it.key()), "unknown key");
    }

    template <class T>
    static T get(const json& v, const std::string& p) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(p, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(p, "expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                    throw ConfigError(p, "expected a nonnegative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(p, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(p, "expected a string");
        }
        return v.get<T>();
    }

private:
    const json& j_;
    std::string path_;
    std::vector<std::string> known_;
};

void require(bool ok, const std::string& path, const std::string& msg) {
    if (!ok) throw ConfigError(path, msg);
}

}  // namespace

void Config::validate() const {
    require(phantom.dims[0] >= 1 && phantom.dims[1] >= 1 && phantom.dims[2] >= 1, "phantom.nx", "dims must be >= 1");
    require(phantom.spacing_mm[0] > 0.0, "phantom.spacing_mm", "must be positive");
    try {
        prevalence.validate();
    } catch (const std::exception& e) {
        throw ConfigError("plan.prevalence", e.what());
    }
    const auto& g = simulation.geometry;
    require(g.n_angles >= 1, "geometry.n_angles", "must be >= 1");
    require(g.n_detectors >= 2, "geometry.n_detectors", "must be >= 2");
    require(g.detector_spacing_mm > 0.0, "geometry.detector_spacing_mm", "must be positive");
    require(g.step_fraction > 0.0 && g.step_fraction <= 1.0, "geometry.step_fraction", "must lie in (0, 1]");
    try {
        g.check_covers(phantom.dims[1], phantom.dims[0], phantom.spacing_mm[0]);
    } catch (const std::exception& e) {
        throw ConfigError("geometry.n_detectors", e.what());
    }
    const auto& s = simulation.spectrum;
    require(s.kvp >= 40.0 && s.kvp <= 150.0, "spectrum.kvp", "must lie in [40, 150]");
    require(s.filtration_mm_al >= 0.0, "spectrum.filtration_mm_al", "must be >= 0");
    require(s.bins >= 1, "spectrum.bins", "must be >= 1");
    const auto& n = simulation.noise;
    require(n.n0 > 0.0, "noise.n0", "must be positive");
    require(n.n_min >= 1.0, "noise.n_min", "must be >= 1");
    require(n.sigma_e >= 0.0, "noise.sigma_e", "must be >= 0");
    require(n.spr >= 0.0, "noise.spr", "must be >= 0");
    require(n.sigma_scatter_px > 0.0, "noise.sigma_scatter_px", "must be positive");
    const auto& t = simulation.thresholds;
    require(t.air < t.bone_lo && t.bone_lo < t.bone_hi, "thresholds", "need air < bone_lo < bone_hi");
    try {
        model.validate();
    } catch (const std::exception& e) {
        throw ConfigError("model", e.what());
    }
    require(loss.weights.lambda_ssa >= 0.0, "loss.lambda_ssa", "must be >= 0");
    require(loss.weights.lambda_edge >= 0.0, "loss.lambda_edge", "must be >= 0");
    require(loss.roi_dilation >= 0, "loss.roi_dilation", "must be >= 0");
    require(loss.teacher_channels >= 1, "loss.teacher_channels", "must be >= 1");
    require(train.lr > 0.0, "train.lr", "must be positive");
    require(train.beta1 >= 0.0 && train.beta1 < 1.0, "train.beta1", "must lie in [0, 1)");
    require(train.beta2 >= 0.0 && train.beta2 < 1.0, "train.beta2", "must lie in [0, 1)");
    require(train.weight_decay >= 0.0, "train.weight_decay", "must be >= 0");
    require(eval.window.hi > eval.window.lo, "eval.window_hi", "must exceed eval.window_lo");
    if (eval.boundaries) {
        const auto& b = *eval.boundaries;
        require(b.size() >= 2, "eval.boundaries", "need at least two edges");
        for (std::size_t i = 1; i < b.size(); ++i) require(b[i] > b[i - 1], "eval.boundaries", "must increase");
    }
}

Config parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    Config c;
    Section top(root, "");
    top.key("seed", [&](const json& v, const std::string& p) { c.seed = Section::get<std::uint64_t>(v, p); });
    top.key("phantom", [&](const json& v, const std::string& p) {
        Section(v, p)
            .key("kind", [&](const json& k, const std::string& kp) {
                c.phantom.kind = parse_phantom_kind(Section::get<std::string>(k, kp));
            })
            .value("nx", c.phantom.dims[0])
            .value("ny", c.phantom.dims[1])
            .value("nz", c.phantom.dims[2])
            .key("spacing_mm", [&](const json& k, const std::string& kp) {
                const double s = Section::get<double>(k, kp);
                c.phantom.spacing_mm = {s, s, s};
            })
            .done();
    });
    top.key("plan", [&](const json& v, const std::string& p) {
        Section(v, p)
            .key("prevalence", [&](const json& pv, const std::string& pp) {
                Section s(pv, pp);
                const char* names[] = {"sound", "filled", "crowned", "implant", "bridge"};
                for (std::size_t i = 0; i < kRestorationStateCount; ++i) s.value(names[i], c.prevalence.p[i]);
                s.done();
            })
            .done();
    });
    auto& sim = c.simulation;
    top.key("geometry", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("n_angles", sim.geometry.n_angles)
            .value("n_detectors", sim.geometry.n_detectors)
            .value("detector_spacing_mm", sim.geometry.detector_spacing_mm)
            .value("step_fraction", sim.geometry.step_fraction)
            .done();
    });
    top.key("spectrum", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("kvp", sim.spectrum.kvp)
            .value("filtration_mm_al", sim.spectrum.filtration_mm_al)
            .value("bins", sim.spectrum.bins)
            .done();
    });
    top.key("noise", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("n0", sim.noise.n0)
            .value("n_min", sim.noise.n_min)
            .value("sigma_e", sim.noise.sigma_e)
            .value("spr", sim.noise.spr)
            .value("sigma_scatter_px", sim.noise.sigma_scatter_px)
            .done();
    });
    top.key("thresholds", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("air", sim.thresholds.air)
            .value("bone_lo", sim.thresholds.bone_lo)
            .value("bone_hi", sim.thresholds.bone_hi)
            .done();
    });
    top.key("recon", [&](const json& v, const std::string& p) {
        Section(v, p)
            .key("filter", [&](const json& k, const std::string& kp) {
                sim.filter = parse_filter(Section::get<std::string>(k, kp));
            })
            .done();
    });
    top.key("simulation", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("polychromatic", sim.polychromatic)
            .value("photon_noise", sim.photon_noise)
            .key("slices", [&](const json& k, const std::string& kp) {
                if (!k.is_array()) throw ConfigError(kp, "expected an array of slice indices");
                std::vector<std::size_t> z;
                for (std::size_t i = 0; i < k.size(); ++i)
                    z.push_back(Section::get<std::size_t>(k[i], kp + "[" + std::to_string(i) + "]"));
                c.slices = z;
            })
            .done();
    });
    top.key("model", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("side", c.model.side)
            .value("patch", c.model.patch)
            .value("dim", c.model.dim)
            .value("depth", c.model.depth)
            .value("heads", c.model.heads)
            .value("ffn_ratio", c.model.ffn_ratio)
            .value("tap_layer", c.model.tap_layer)
            .done();
    });
    top.key("loss", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("lambda_ssa", c.loss.weights.lambda_ssa)
            .value("lambda_edge", c.loss.weights.lambda_edge)
            .value("roi_dilation", c.loss.roi_dilation)
            .value("teacher_seed", c.loss.teacher_seed)
            .value("teacher_channels", c.loss.teacher_channels)
            .done();
    });
    top.key("train", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("steps", c.train.steps)
            .value("lr", c.train.lr)
            .value("warmup", c.train.warmup)
            .value("lr_floor", c.train.lr_floor)
            .value("weight_decay", c.train.weight_decay)
            .value("beta1", c.train.beta1)
            .value("beta2", c.train.beta2)
            .value("seed", c.train.seed)
            .done();
    });
    top.key("eval", [&](const json& v, const std::string& p) {
        Section(v, p)
            .value("window_lo", c.eval.window.lo)
            .value("window_hi", c.eval.window.hi)
            .key("boundaries", [&](const json& k, const std::string& kp) {
                if (!k.is_array()) throw ConfigError(kp, "expected an array of numbers");
                std::vector<double> b;
                for (std::size_t i = 0; i < k.size(); ++i)
                    b.push_back(Section::get<double>(k[i], kp + "[" + std::to_string(i) + "]"));
                c.eval.boundaries = b;
            })
            .done();
    });
    top.done();
    c.validate();
    return c;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const Config& c, int indent) {
    ojson j;
    if (c.seed) j["seed"] = *c.seed;
    j["phantom"] = {{"kind", std::string(phantom_kind_name(c.phantom.kind))},
                    {"nx", c.phantom.dims[0]},
                    {"ny", c.phantom.dims[1]},
                    {"nz", c.phantom.dims[2]},
                    {"spacing_mm", c.phantom.spacing_mm[0]}};
    const auto& pv = c.prevalence.p;
    j["plan"]["prevalence"] = {
        {"sound", pv[0]}, {"filled", pv[1]}, {"crowned", pv[2]}, {"implant", pv[3]}, {"bridge", pv[4]}};
    const auto& s = c.simulation;
    j["geometry"] = {{"n_angles", s.geometry.n_angles},
                     {"n_detectors", s.geometry.n_detectors},
                     {"detector_spacing_mm", s.geometry.detector_spacing_mm},
                     {"step_fraction", s.geometry.step_fraction}};
    j["spectrum"] = {{"kvp", s.spectrum.kvp}, {"filtration_mm_al", s.spectrum.filtration_mm_al}, {"bins", s.spectrum.bins}};
    j["noise"] = {{"n0", s.noise.n0},
                  {"n_min", s.noise.n_min},
                  {"sigma_e", s.noise.sigma_e},
                  {"spr", s.noise.spr},
                  {"sigma_scatter_px", s.noise.sigma_scatter_px}};
    j["thresholds"] = {{"air", s.thresholds.air}, {"bone_lo", s.thresholds.bone_lo}, {"bone_hi", s.thresholds.bone_hi}};
    j["recon"] = {{"filter", std::string(filter_name(s.filter))}};
    j["simulation"] = {{"polychromatic", s.polychromatic}, {"photon_noise", s.photon_noise}};
    if (c.slices) j["simulation"]["slices"] = *c.slices;
    j["model"] = {{"side", c.model.side},   {"patch", c.model.patch},         {"dim", c.model.dim},
                  {"depth", c.model.depth}, {"heads", c.model.heads},         {"ffn_ratio", c.model.ffn_ratio},
                  {"tap_layer", c.model.tap_layer}};
    j["loss"] = {{"lambda_ssa", c.loss.weights.lambda_ssa},
                 {"lambda_edge", c.loss.weights.lambda_edge},
                 {"roi_dilation", c.loss.roi_dilation},
                 {"teacher_seed", c.loss.teacher_seed},
                 {"teacher_channels", c.loss.teacher_channels}};
    j["train"] = {{"steps", c.train.steps},       {"lr", c.train.lr},       {"warmup", c.train.warmup},
                  {"lr_floor", c.train.lr_floor}, {"weight_decay", c.train.weight_decay},
                  {"beta1", c.train.beta1},       {"beta2", c.train.beta2}, {"seed", c.train.seed}};
    j["eval"] = {{"window_lo", c.eval.window.lo}, {"window_hi", c.eval.window.hi}};
    if (c.eval.boundaries) j["eval"]["boundaries"] = *c.eval.boundaries;
    return j.dump(indent);
}

}  // namespace dmar
