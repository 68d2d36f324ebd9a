#include "dmar/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "dmar/error.hpp"
#include "dmar/rng.hpp"

namespace dmar {

namespace {

constexpr double kSoftTissueHu = 40.0;
constexpr double kAlveolarBoneHu = 800.0;
constexpr double kToothHu = 1500.0;

struct ArchPoint {
    double x, y;
};

std::vector<ArchPoint> sample_arch(double cx, double front_y, double half_width, double depth, int n) {
    std::vector<ArchPoint> pts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = -1.0 + 2.0 * i / (n - 1);
        pts[static_cast<std::size_t>(i)] = {cx + half_width * u, front_y + depth * u * u};
    }
    return pts;
}

// Positions at equal arc-length fractions along a polyline.
std::vector<ArchPoint> equal_arc_positions(const std::vector<ArchPoint>& curve, int count) {
    std::vector<double> cum(curve.size(), 0.0);
    for (std::size_t i = 1; i < curve.size(); ++i)
        cum[i] = cum[i - 1] + std::hypot(curve[i].x - curve[i - 1].x, curve[i].y - curve[i - 1].y);
    std::vector<ArchPoint> out;
    for (int k = 0; k < count; ++k) {
        const double target = cum.back() * (k + 0.5) / count;
        const auto it = std::lower_bound(cum.begin(), cum.end(), target);
        const auto j = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - cum.begin()));
        const double t = (target - cum[j - 1]) / std::max(1e-12, cum[j] - cum[j - 1]);
        out.push_back({curve[j - 1].x + t * (curve[j].x - curve[j - 1].x),
                       curve[j - 1].y + t * (curve[j].y - curve[j - 1].y)});
    }
    return out;
}

double arc_length(const std::vector<ArchPoint>& curve) {
    double len = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        len += std::hypot(curve[i].x - curve[i - 1].x, curve[i].y - curve[i - 1].y);
    return len;
}

Phantom disk_phantom(std::array<std::size_t, 3> dims, std::array<double, 3> spacing) {
    Phantom p{Volume(dims, spacing, -1000.0), LabelVolume(dims, spacing, 0)};
    const double cx = (dims[0] - 1) / 2.0;
    const double cy = (dims[1] - 1) / 2.0;
    const double r = 0.4 * static_cast<double>(std::min(dims[0], dims[1]));
    for (std::size_t z = 0; z < dims[2]; ++z)
        for (std::size_t y = 0; y < dims[1]; ++y)
            for (std::size_t x = 0; x < dims[0]; ++x)
                if (std::hypot(x - cx, y - cy) <= r) p.hu(x, y, z) = 0.0;
    return p;
}

Phantom dental_arch_phantom(std::array<std::size_t, 3> dims, std::array<double, 3> spacing, std::uint64_t seed) {
    if (dims[0] < 32 || dims[1] < 32 || dims[2] < 32)
        throw ParameterError("dental_arch phantom needs dims >= 32 along every axis");
    SeqRng rng(seed);
    const auto nx = static_cast<double>(dims[0]);
    const auto ny = static_cast<double>(dims[1]);
    const auto nz = static_cast<double>(dims[2]);

    Phantom p{Volume(dims, spacing, -1000.0), LabelVolume(dims, spacing, 0)};

    const double jaw_cx = (nx - 1) / 2.0, jaw_cy = (ny - 1) / 2.0;
    const double jaw_ax = 0.44 * nx, jaw_ay = 0.40 * ny;

    const double arch_half = rng.uniform(0.27, 0.32) * nx;
    const double arch_depth = rng.uniform(0.38, 0.46) * ny;
    const double arch_front = rng.uniform(0.22, 0.27) * ny;
    const auto curve = sample_arch(jaw_cx, arch_front, arch_half, arch_depth, 401);

    const int per_side = static_cast<int>(rng.integer(4, 8));
    const int n_teeth = 2 * per_side;
    const double pitch = arc_length(curve) / n_teeth;
    const double r0 = std::min(0.40 * pitch, 0.07 * nx);
    const auto centres = equal_arc_positions(curve, n_teeth);

    // Alveolar band: distance from the arch curve, shared by every bone slice.
    Image band_dist(dims[1], dims[0], spacing[0], 1e9);
    for (std::size_t y = 0; y < dims[1]; ++y)
        for (std::size_t x = 0; x < dims[0]; ++x) {
            double best = 1e9;
            for (const auto& c : curve) best = std::min(best, std::hypot(x - c.x, y - c.y));
            band_dist(y, x) = best;
        }
    const double band_half = 1.6 * r0;
    const auto crest = static_cast<std::size_t>(std::lround(rng.uniform(0.45, 0.55) * nz));

    for (std::size_t z = 0; z < dims[2]; ++z)
        for (std::size_t y = 0; y < dims[1]; ++y)
            for (std::size_t x = 0; x < dims[0]; ++x) {
                const double ex = (x - jaw_cx) / jaw_ax, ey = (y - jaw_cy) / jaw_ay;
                if (ex * ex + ey * ey > 1.0) continue;
                p.hu(x, y, z) = (z <= crest && band_dist(y, x) <= band_half) ? kAlveolarBoneHu : kSoftTissueHu;
            }

    // Teeth ordered along the arch: image-left half is quadrant 1, image-right quadrant 2,
    // numbering outward from the midline.
    for (int t = 0; t < n_teeth; ++t) {
        const int fdi = t < per_side ? 10 + (per_side - t) : 20 + (t - per_side + 1);
        const double rx = r0 * rng.uniform(0.9, 1.1);
        const double ry = r0 * rng.uniform(0.8, 1.0);
        const auto z_lo = static_cast<std::size_t>(rng.integer(std::lround(0.08 * nz), std::lround(0.20 * nz)));
        const auto z_hi = std::min(dims[2] - 1,
                                   static_cast<std::size_t>(rng.integer(std::lround(0.78 * nz), std::lround(0.92 * nz))));
        const double hu = kToothHu + rng.uniform(-100.0, 100.0);
        const double cx = centres[static_cast<std::size_t>(t)].x;
        const double cy = centres[static_cast<std::size_t>(t)].y;
        for (std::size_t z = z_lo; z <= z_hi; ++z) {
            const double u = static_cast<double>(z - z_lo) / static_cast<double>(z_hi - z_lo);
            const double s = 0.55 + 0.45 * std::min(1.0, u / 0.55);
            const double ax = rx * s, ay = ry * s;
            const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(cx - ax)));
            const auto x1 = static_cast<std::size_t>(std::min(nx - 1, std::ceil(cx + ax)));
            const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(cy - ay)));
            const auto y1 = static_cast<std::size_t>(std::min(ny - 1, std::ceil(cy + ay)));
            for (std::size_t y = y0; y <= y1; ++y)
                for (std::size_t x = x0; x <= x1; ++x) {
                    const double ex = (x - cx) / ax, ey = (y - cy) / ay;
                    if (ex * ex + ey * ey > 1.0 || p.labels(x, y, z) != 0) continue;
                    p.labels(x, y, z) = static_cast<std::uint8_t>(fdi);
                    p.hu(x, y, z) = hu;
                }
        }
    }
    return p;
}

}  // namespace

std::string_view phantom_kind_name(PhantomKind k) {
    return k == PhantomKind::Disk ? "disk" : "dental_arch";
}

PhantomKind parse_phantom_kind(std::string_view name) {
    if (name == "disk") return PhantomKind::Disk;
    if (name == "dental_arch") return PhantomKind::DentalArch;
    throw ParameterError("unknown phantom kind: " + std::string(name));
}

Phantom synthetic_phantom(PhantomKind kind, std::array<std::size_t, 3> dims, std::array<double, 3> spacing_mm,
                          std::uint64_t seed) {
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0) throw ParameterError("phantom dims must be positive");
    if (kind == PhantomKind::Disk) {
        if (dims[0] < 4 || dims[1] < 4) throw ParameterError("disk phantom needs at least 4x4 slices");
        return disk_phantom(dims, spacing_mm);
    }
    return dental_arch_phantom(dims, spacing_mm, seed);
}

// ---------------------------------------------------------------------------

std::string_view state_name(RestorationState s) {
    switch (s) {
        case RestorationState::Sound: return "sound";
        case RestorationState::Filled: return "filled";
        case RestorationState::Crowned: return "crowned";
        case RestorationState::Implant: return "implant";
        case RestorationState::Bridge: return "bridge";
    }
    return "sound";
}

RestorationState parse_state(std::string_view name) {
    for (std::size_t i = 0; i < kRestorationStateCount; ++i) {
        const auto s = static_cast<RestorationState>(i);
        if (state_name(s) == name) return s;
    }
    throw ParameterError("unknown restoration state: " + std::string(name));
}

std::pair<double, double> legal_zone(RestorationState s) {
    switch (s) {
        case RestorationState::Sound: return {0.0, 0.0};
        case RestorationState::Implant: return {0.0, 0.60};
        case RestorationState::Crowned:
        case RestorationState::Bridge: return {0.40, 1.0};
        case RestorationState::Filled: return {0.40, 0.95};
    }
    return {0.0, 0.0};
}

void Prevalence::validate() const {
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw ParameterError("prevalence entries must be nonnegative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParameterError("prevalence must sum to 1");
}

Prevalence Prevalence::only(RestorationState s) {
    Prevalence out;
    out.p.fill(0.0);
    out.p[static_cast<std::size_t>(s)] = 1.0;
    return out;
}

std::vector<ToothGeometry> analyze_teeth(const LabelVolume& labels) {
    std::map<int, ToothGeometry> teeth;
    std::map<int, std::pair<double, double>> sums;
    for (std::size_t z = 0; z < labels.nz(); ++z)
        for (std::size_t y = 0; y < labels.ny(); ++y)
            for (std::size_t x = 0; x < labels.nx(); ++x) {
                const int fdi = labels(x, y, z);
                if (fdi == 0) continue;
                auto [it, fresh] = teeth.try_emplace(fdi);
                auto& g = it->second;
                if (fresh) {
                    g.fdi = fdi;
                    g.z_lo = g.z_hi = z;
                    g.x_lo = g.x_hi = x;
                    g.y_lo = g.y_hi = y;
                }
                g.z_lo = std::min(g.z_lo, z);
                g.z_hi = std::max(g.z_hi, z);
                g.x_lo = std::min(g.x_lo, x);
                g.x_hi = std::max(g.x_hi, x);
                g.y_lo = std::min(g.y_lo, y);
                g.y_hi = std::max(g.y_hi, y);
                ++g.voxel_count;
                auto& s = sums[fdi];
                s.first += static_cast<double>(x);
                s.second += static_cast<double>(y);
            }
    std::vector<ToothGeometry> out;
    for (auto& [fdi, g] : teeth) {
        const auto& s = sums[fdi];
        g.cx = s.first / static_cast<double>(g.voxel_count);
        g.cy = s.second / static_cast<double>(g.voxel_count);
        g.half_width_x = (static_cast<double>(g.x_hi - g.x_lo) + 1.0) / 2.0;
        g.half_width_y = (static_cast<double>(g.y_hi - g.y_lo) + 1.0) / 2.0;
        out.push_back(g);
    }
    return out;
}

bool slice_in_zone(std::size_t k, std::size_t height, double lo, double hi) {
    const double centre = static_cast<double>(k) + 0.5;
    const auto h = static_cast<double>(height);
    return centre >= lo * h && centre <= hi * h;
}

RestorationPlan plan_restorations(const LabelVolume& labels, std::uint64_t seed, const Prevalence& prevalence) {
    prevalence.validate();
    RestorationPlan plan;
    const double spacing = labels.spacing_mm[0];
    for (const auto& tooth : analyze_teeth(labels)) {
        SeqRng rng(mix64(seed) ^ (static_cast<std::uint64_t>(tooth.fdi) * 0xA24BAED4963EE407ULL));
        ToothPlan tp;
        tp.fdi = tooth.fdi;

        const double u = rng.uniform();
        double acc = 0.0;
        tp.state = RestorationState::Sound;
        for (std::size_t i = 0; i < kRestorationStateCount; ++i) {
            acc += prevalence.p[i];
            if (u < acc && prevalence.p[i] > 0.0) {
                tp.state = static_cast<RestorationState>(i);
                break;
            }
        }
        // Guard against rounding leaving u above the cumulative total.
        if (u >= acc) {
            for (std::size_t i = kRestorationStateCount; i-- > 0;)
                if (prevalence.p[i] > 0.0) {
                    tp.state = static_cast<RestorationState>(i);
                    break;
                }
        }

        if (tp.state != RestorationState::Sound) {
            const auto [wlo, whi] = legal_zone(tp.state);
            constexpr double kMinSpan = 0.25;
            tp.zone_lo = rng.uniform(wlo, whi - kMinSpan);
            tp.zone_hi = rng.uniform(tp.zone_lo + kMinSpan, whi);
            const double half_mm = std::min(tooth.half_width_x, tooth.half_width_y) * spacing;
            auto& s = tp.shape;
            s.base_radius_mm = rng.uniform(0.45, 0.7) * half_mm;
            s.taper = rng.uniform(0.40, 0.60);
            s.thread_amplitude = rng.uniform(0.08, 0.15);
            s.thread_pitch_slices = rng.uniform(2.5, 4.0);
            s.cap_thickness_mm = std::max(spacing, rng.uniform(0.2, 0.35) * half_mm);
            s.blob_seed = rng.bits();
            s.blob_exponent = rng.uniform(2.0, 4.0);
            s.blob_scale = rng.uniform(0.35, 0.6);
            s.blob_offset_x = rng.uniform(-0.25, 0.25);
            s.blob_offset_y = rng.uniform(-0.25, 0.25);
        }
        plan.teeth.push_back(tp);
    }
    return plan;
}

namespace {

struct SliceWriter {
    const LabelVolume& labels;
    const ToothGeometry& tooth;
    std::size_t z;
    std::vector<std::size_t>& out;

    void put(std::size_t x, std::size_t y) const {
        if (x < tooth.x_lo || x > tooth.x_hi || y < tooth.y_lo || y > tooth.y_hi) return;
        out.push_back(labels.index(x, y, z));
    }

    template <class Pred>
    void fill(Pred inside) const {
        for (std::size_t y = tooth.y_lo; y <= tooth.y_hi; ++y)
            for (std::size_t x = tooth.x_lo; x <= tooth.x_hi; ++x)
                if (inside(static_cast<double>(x), static_cast<double>(y))) out.push_back(labels.index(x, y, z));
    }

    // Always include the voxel nearest a solid's centre so every planned slice is occupied.
    void anchor(double cx, double cy) const {
        put(static_cast<std::size_t>(std::lround(std::clamp(cx, double(tooth.x_lo), double(tooth.x_hi)))),
            static_cast<std::size_t>(std::lround(std::clamp(cy, double(tooth.y_lo), double(tooth.y_hi)))));
    }
};

bool is_tooth(const LabelVolume& labels, long x, long y, std::size_t z, int fdi) {
    if (x < 0 || y < 0 || x >= static_cast<long>(labels.nx()) || y >= static_cast<long>(labels.ny())) return false;
    return labels(static_cast<std::size_t>(x), static_cast<std::size_t>(y), z) == fdi;
}

// Voxels of the tooth's own cross-section within `t` voxels of its outline.
void crown_shell(const SliceWriter& w, double t, bool solid) {
    const int reach = static_cast<int>(std::ceil(t));
    const auto& g = w.tooth;
    for (std::size_t y = g.y_lo; y <= g.y_hi; ++y)
        for (std::size_t x = g.x_lo; x <= g.x_hi; ++x) {
            if (!is_tooth(w.labels, static_cast<long>(x), static_cast<long>(y), w.z, g.fdi)) continue;
            bool near_edge = solid;
            for (int dy = -reach; dy <= reach && !near_edge; ++dy)
                for (int dx = -reach; dx <= reach && !near_edge; ++dx) {
                    if (dx * dx + dy * dy > t * t) continue;
                    near_edge = !is_tooth(w.labels, static_cast<long>(x) + dx, static_cast<long>(y) + dy, w.z, g.fdi);
                }
            if (near_edge) w.out.push_back(w.labels.index(x, y, w.z));
        }
}

}  // namespace

std::vector<std::size_t> rasterize_restoration(const ToothPlan& plan, const ToothGeometry& tooth,
                                               const LabelVolume& labels) {
    std::vector<std::size_t> voxels;
    if (plan.state == RestorationState::Sound) return voxels;
    const double spacing = labels.spacing_mm[0];
    const double z_ratio = labels.spacing_mm[0] / labels.spacing_mm[2];
    const std::size_t h = tooth.height();

    std::size_t k_min = h, k_max = 0;
    for (std::size_t k = 0; k < h; ++k)
        if (slice_in_zone(k, h, plan.zone_lo, plan.zone_hi)) {
            k_min = std::min(k_min, k);
            k_max = std::max(k_max, k);
        }
    if (k_min > k_max) return voxels;

    const auto& s = plan.shape;
    SeqRng blob_rng(s.blob_seed);
    const int lobes = static_cast<int>(blob_rng.integer(2, 5));
    const double lobe_phase = blob_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double lobe_amp = blob_rng.uniform(0.05, 0.15);

    for (std::size_t k = k_min; k <= k_max; ++k) {
        const std::size_t z = tooth.z_lo + k;
        const double v = k_max > k_min ? static_cast<double>(k - k_min) / static_cast<double>(k_max - k_min) : 1.0;
        SliceWriter w{labels, tooth, z, voxels};

        switch (plan.state) {
            case RestorationState::Implant: {
                // Tapered apex that opens into a threaded body.
                const double body = s.base_radius_mm / spacing;
                constexpr double kApexFraction = 0.35;
                double r = body * (s.taper + (1.0 - s.taper) * std::min(1.0, v / kApexFraction));
                if (v > kApexFraction)
                    r *= 1.0 + s.thread_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) /
                                                             s.thread_pitch_slices);
                r = std::max(1.0, r);
                w.fill([&](double x, double y) { return std::hypot(x - tooth.cx, y - tooth.cy) <= r; });
                w.anchor(tooth.cx, tooth.cy);
                break;
            }
            case RestorationState::Crowned: {
                const double t = std::max(1.0, s.cap_thickness_mm / spacing);
                const double cap_slices = std::max(1.0, t * z_ratio);
                crown_shell(w, t, static_cast<double>(k_max - k) < cap_slices);
                break;
            }
            case RestorationState::Filled: {
                const double prof = 0.7 + 0.3 * std::sin(std::numbers::pi * v);
                const double a = std::max(1.0, s.blob_scale * tooth.half_width_x * prof);
                const double b = std::max(1.0, s.blob_scale * tooth.half_width_y * prof);
                const double bx = tooth.cx + s.blob_offset_x * tooth.half_width_x;
                const double by = tooth.cy + s.blob_offset_y * tooth.half_width_y;
                const double n = s.blob_exponent;
                w.fill([&](double x, double y) {
                    const double dx = (x - bx) / a, dy = (y - by) / b;
                    const double rho = std::pow(std::pow(std::abs(dx), n) + std::pow(std::abs(dy), n), 1.0 / n);
                    const double theta = std::atan2(dy, dx);
                    return rho <= 1.0 + lobe_amp * std::sin(lobes * theta + lobe_phase);
                });
                w.anchor(bx, by);
                break;
            }
            case RestorationState::Bridge: {
                // Two crowned abutments at the mesial and distal ends of the box joined
                // by a connector bar in the upper part of the zone.
                const double t = std::max(1.0, s.cap_thickness_mm / spacing);
                const double off = 0.5 * tooth.half_width_x;
                const double ra = std::max(t + 0.5, 0.45 * tooth.half_width_x);
                const bool solid = v > 0.8;
                const bool bar = v >= 0.6;
                const double bar_half = std::max(1.0, 0.2 * tooth.half_width_y);
                w.fill([&](double x, double y) {
                    for (double sx : {tooth.cx - off, tooth.cx + off}) {
                        const double d = std::hypot(x - sx, y - tooth.cy);
                        if (d <= ra && (solid || d >= ra - t)) return true;
                    }
                    return bar && std::abs(y - tooth.cy) <= bar_half && x >= tooth.cx - off && x <= tooth.cx + off;
                });
                w.anchor(tooth.cx - off, tooth.cy + ra - 0.5 * t);
                w.anchor(tooth.cx + off, tooth.cy + ra - 0.5 * t);
                break;
            }
            case RestorationState::Sound: break;
        }
    }
    std::sort(voxels.begin(), voxels.end());
    voxels.erase(std::unique(voxels.begin(), voxels.end()), voxels.end());
    return voxels;
}

MaskVolume rasterize_metal(const RestorationPlan& plan, const LabelVolume& labels) {
    MaskVolume mask(labels.dims, labels.spacing_mm, 0);
    const auto teeth = analyze_teeth(labels);
    std::vector<std::vector<std::size_t>> solids(plan.teeth.size());

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(plan.teeth.size()); ++i) {
        const auto& tp = plan.teeth[static_cast<std::size_t>(i)];
        const auto it = std::find_if(teeth.begin(), teeth.end(), [&](const auto& g) { return g.fdi == tp.fdi; });
        if (it == teeth.end()) continue;
        solids[static_cast<std::size_t>(i)] = rasterize_restoration(tp, *it, labels);
    }
    for (const auto& solid : solids)
        for (auto idx : solid) mask.data[idx] = 1;
    return mask;
}

// ---------------------------------------------------------------------------

void HuThresholds::validate() const {
    if (!(air < bone_lo && bone_lo < bone_hi))
        throw ParameterError("HU thresholds must be ordered air < bone_lo < bone_hi");
}

MaterialSlice material_slice(const MaterialMap& map, std::size_t z) {
    return MaterialSlice{{map.water.slice(z), map.bone.slice(z), map.metal.slice(z)}};
}

MaterialMap decompose_materials(const Volume& hu, const MaskVolume& metal_mask, const HuThresholds& th) {
    th.validate();
    if (!hu.same_shape(metal_mask)) throw ShapeError("decompose_materials: metal mask shape mismatch");
    MaterialMap m{Volume(hu.dims, hu.spacing_mm, 0.0), Volume(hu.dims, hu.spacing_mm, 0.0),
                  Volume(hu.dims, hu.spacing_mm, 0.0)};
    for (std::size_t i = 0; i < hu.size(); ++i) {
        if (metal_mask.data[i]) {
            m.metal.data[i] = 1.0;
            continue;
        }
        const double v = hu.data[i];
        if (v < th.bone_lo) {
            m.water.data[i] = std::clamp((v + 1000.0) / 1000.0, 0.0, 1.0);
        } else {
            const double b = std::clamp((v - th.bone_lo) / (th.bone_hi - th.bone_lo), 0.0, 1.0);
            m.bone.data[i] = b;
            m.water.data[i] = 1.0 - b;
        }
    }
    return m;
}

MaskVolume edge_mask(const LabelVolume& labels) {
    MaskVolume out(labels.dims, labels.spacing_mm, 0);
    const auto nx = static_cast<long>(labels.nx()), ny = static_cast<long>(labels.ny());
    auto labelled = [&](long x, long y, std::size_t z) {
        return x >= 0 && y >= 0 && x < nx && y < ny &&
               labels(static_cast<std::size_t>(x), static_cast<std::size_t>(y), z) != 0;
    };
    for (std::size_t z = 0; z < labels.nz(); ++z)
        for (long y = 0; y < ny; ++y)
            for (long x = 0; x < nx; ++x) {
                if (!labelled(x, y, z)) continue;
                if (!labelled(x - 1, y, z) || !labelled(x + 1, y, z) || !labelled(x, y - 1, z) ||
                    !labelled(x, y + 1, z))
                    out(static_cast<std::size_t>(x), static_cast<std::size_t>(y), z) = 1;
            }
    return out;
}

}  // namespace dmar
