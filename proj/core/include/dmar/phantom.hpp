#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmar/volume.hpp"

namespace dmar {

enum class PhantomKind { Disk, DentalArch };

std::string_view phantom_kind_name(PhantomKind k);
PhantomKind parse_phantom_kind(std::string_view name);

struct PhantomParams {
    PhantomKind kind = PhantomKind::DentalArch;
    std::array<std::size_t, 3> dims{128, 128, 40};
    std::array<double, 3> spacing_mm{0.5, 0.5, 0.5};
};

struct Phantom {
    Volume hu;
    LabelVolume labels;
};

/// Disk: uniform water cylinder (HU 0) in air (-1000). DentalArch: soft-tissue
/// jaw with alveolar bone and 8-16 labelled teeth on a parabolic arch.
/// Deterministic per seed.
Phantom synthetic_phantom(PhantomKind kind, std::array<std::size_t, 3> dims,
                          std::array<double, 3> spacing_mm, std::uint64_t seed);

inline Phantom synthetic_phantom(const PhantomParams& p, std::uint64_t seed) {
    return synthetic_phantom(p.kind, p.dims, p.spacing_mm, seed);
}

// ---------------------------------------------------------------------------
// Restoration planning

enum class RestorationState : std::uint8_t { Sound = 0, Filled, Crowned, Implant, Bridge };

inline constexpr std::size_t kRestorationStateCount = 5;

std::string_view state_name(RestorationState s);
RestorationState parse_state(std::string_view name);

/// Legal z-window, as fractions of the tooth height, for metal of a state.
/// Sound returns the empty window {0, 0}.
std::pair<double, double> legal_zone(RestorationState s);

/// Per-state probabilities in enum order: Sound, Filled, Crowned, Implant, Bridge.
struct Prevalence {
    std::array<double, kRestorationStateCount> p{0.55, 0.25, 0.12, 0.06, 0.02};

    double operator[](RestorationState s) const { return p[static_cast<std::size_t>(s)]; }
    void validate() const;  // ParameterError unless nonnegative and summing to 1
    static Prevalence only(RestorationState s);
};

struct ShapeParams {
    double base_radius_mm = 0.0;      // implant body radius
    double taper = 1.0;               // apex radius / body radius
    double thread_amplitude = 0.0;    // relative radius modulation
    double thread_pitch_slices = 3.0;
    double cap_thickness_mm = 0.0;    // crown / bridge
    std::uint64_t blob_seed = 0;      // filling
    double blob_exponent = 2.0;       // superellipse exponent
    double blob_scale = 0.5;          // blob half-axis / tooth half-width
    double blob_offset_x = 0.0;       // blob centre offset, fraction of half-width
    double blob_offset_y = 0.0;
};

struct ToothPlan {
    int fdi = 0;
    RestorationState state = RestorationState::Sound;
    double zone_lo = 0.0;  // fraction of tooth height h
    double zone_hi = 0.0;
    ShapeParams shape;
};

struct RestorationPlan {
    std::vector<ToothPlan> teeth;  // ascending FDI
};

/// Extent of one labelled tooth, measured from the label volume.
struct ToothGeometry {
    int fdi = 0;
    std::size_t z_lo = 0, z_hi = 0;  // inclusive slice range
    std::size_t x_lo = 0, x_hi = 0;  // inclusive xy bounding box
    std::size_t y_lo = 0, y_hi = 0;
    double cx = 0.0, cy = 0.0;       // centroid of the xy footprint (voxels)
    double half_width_x = 0.0;       // voxels
    double half_width_y = 0.0;
    std::size_t voxel_count = 0;

    std::size_t height() const noexcept { return z_hi - z_lo + 1; }
};

std::vector<ToothGeometry> analyze_teeth(const LabelVolume& labels);

/// True when slice `k` (0-based from the tooth's lowest slice) of a tooth with
/// `height` slices lies inside [lo, hi]*h, judged at the slice centre.
bool slice_in_zone(std::size_t k, std::size_t height, double lo, double hi);

/// Independent seeded state draw per tooth; zones uniform inside the legal window.
RestorationPlan plan_restorations(const LabelVolume& labels, std::uint64_t seed,
                                  const Prevalence& prevalence = {});

/// Linear voxel indices of the metal solid for one planned tooth.
std::vector<std::size_t> rasterize_restoration(const ToothPlan& plan, const ToothGeometry& tooth,
                                               const LabelVolume& labels);

/// Union of every restoration's solid (binary 0/1 mask).
MaskVolume rasterize_metal(const RestorationPlan& plan, const LabelVolume& labels);

// ---------------------------------------------------------------------------
// Material decomposition

struct HuThresholds {
    double air = -500.0;      // prior-image air/water split
    double bone_lo = 400.0;   // water/soft tissue below
    double bone_hi = 2500.0;  // metal above

    void validate() const;
};

struct MaterialMap {
    Volume water;
    Volume bone;
    Volume metal;

    const Volume& field(std::size_t m) const { return m == 0 ? water : (m == 1 ? bone : metal); }
};

/// Two-dimensional view of a material map (one axial slice).
struct MaterialSlice {
    std::array<Image, 3> fields;  // water, bone, metal

    std::size_t rows() const { return fields[0].rows; }
    std::size_t cols() const { return fields[0].cols; }
};

MaterialSlice material_slice(const MaterialMap& map, std::size_t z);

/// Piecewise HU -> density fractions. Metal voxels are taken from the mask
/// only (x_metal = 1 there, other fractions 0).
MaterialMap decompose_materials(const Volume& hu, const MaskVolume& metal_mask,
                                const HuThresholds& thresholds = {});

/// Per-slice boundary of the union of tooth labels: a voxel is an edge voxel
/// iff it is labelled and has an unlabelled 4-neighbour in its slice.
MaskVolume edge_mask(const LabelVolume& labels);

}  // namespace dmar
