#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace dmar {

enum class Material { Water = 0, Bone = 1, Metal = 2, Aluminum = 3 };

inline constexpr std::array<Material, 3> kPhantomMaterials{Material::Water, Material::Bone, Material::Metal};

std::string_view material_name(Material m);

/// Polychromatic source spectrum: ascending bin centers (keV) and
/// normalized relative fluence per bin.
struct EnergySpectrum {
    std::vector<double> energies_kev;
    std::vector<double> weights;

    std::size_t size() const noexcept { return energies_kev.size(); }

    /// Validates the invariants (ascending positive energies, weights
    /// summing to one); throws ParameterError.
    void validate(double kvp = 1e9) const;

    static EnergySpectrum monochromatic(double energy_kev);
};

struct SpectrumParams {
    double kvp = 120.0;
    double filtration_mm_al = 2.0;
    int bins = 50;
};

struct AttenuationKnot {
    double energy_kev;
    double mu_per_mm;
};

/// Linear attenuation knots per material, log-log interpolated between knots.
class MaterialTable {
public:
    MaterialTable();  // embedded reference values

    explicit MaterialTable(std::array<std::vector<AttenuationKnot>, 4> knots);

    std::span<const AttenuationKnot> knots(Material m) const {
        return knots_[static_cast<std::size_t>(m)];
    }

    double min_energy() const;
    double max_energy() const;

    static const MaterialTable& reference();

private:
    std::array<std::vector<AttenuationKnot>, 4> knots_;
};

/// Kramers bremsstrahlung (kvp - E)/E on n_bins equal bins over [20, kvp],
/// hardened by an aluminium filter, normalized to unit sum.
EnergySpectrum build_spectrum(double kvp, double filtration_mm_al, int n_bins,
                              const MaterialTable& table = MaterialTable::reference());

inline EnergySpectrum build_spectrum(const SpectrumParams& p) {
    return build_spectrum(p.kvp, p.filtration_mm_al, p.bins);
}

/// mu(E) in mm^-1; exact at knots, log-log linear between. Throws RangeError
/// outside the knot range.
double attenuation_mu(Material material, double energy_kev,
                      const MaterialTable& table = MaterialTable::reference());

/// Fluence-weighted mean energy.
double effective_energy(const EnergySpectrum& spectrum);

/// Lower edge of the diagnostic band used for spectrum bins.
inline constexpr double kSpectrumMinKev = 20.0;

}  // namespace dmar
