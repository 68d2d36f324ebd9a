#include "dmar/physics_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dmar/error.hpp"

namespace dmar {

namespace {

struct MassKnot {
    double energy_kev;
    double mu_over_rho_cm2_g;
};

// Photon mass attenuation coefficients (with coherent scattering) from the
// NIST XCOM / Hubbell-Seltzer tables, converted to mm^-1 with the densities
// below.
constexpr std::array<MassKnot, 8> kWater{{{20, 0.8096}, {30, 0.3756}, {40, 0.2683}, {50, 0.2269},
                                          {60, 0.2059}, {80, 0.1837}, {100, 0.1707}, {150, 0.1505}}};
constexpr std::array<MassKnot, 8> kCorticalBone{{{20, 2.394}, {30, 0.8051}, {40, 0.4242}, {50, 0.3148},
                                                 {60, 0.2629}, {80, 0.2083}, {100, 0.1855}, {150, 0.1582}}};
constexpr std::array<MassKnot, 8> kTitanium{{{20, 15.85}, {30, 4.972}, {40, 2.214}, {50, 1.213},
                                             {60, 0.7661}, {80, 0.4052}, {100, 0.2721}, {150, 0.1649}}};
constexpr std::array<MassKnot, 8> kAluminum{{{20, 3.441}, {30, 1.128}, {40, 0.5685}, {50, 0.3681},
                                             {60, 0.2778}, {80, 0.2018}, {100, 0.1704}, {150, 0.1378}}};

constexpr double kWaterDensity = 1.0;
constexpr double kBoneDensity = 1.92;
constexpr double kTitaniumDensity = 4.5;
constexpr double kAluminumDensity = 2.699;

std::vector<AttenuationKnot> to_linear(const std::array<MassKnot, 8>& table, double density) {
    std::vector<AttenuationKnot> out;
    out.reserve(table.size());
    for (const auto& k : table) out.push_back({k.energy_kev, k.mu_over_rho_cm2_g * density / 10.0});
    return out;
}

}  // namespace

std::string_view material_name(Material m) {
    switch (m) {
        case Material::Water: return "water";
        case Material::Bone: return "bone";
        case Material::Metal: return "metal";
        case Material::Aluminum: return "aluminum";
    }
    return "unknown";
}

void EnergySpectrum::validate(double kvp) const {
    if (energies_kev.empty() || energies_kev.size() != weights.size())
        throw ParameterError("spectrum: energies and weights must be nonempty and equally sized");
    for (std::size_t i = 0; i < energies_kev.size(); ++i) {
        if (!(energies_kev[i] > 0.0) || energies_kev[i] > kvp)
            throw ParameterError("spectrum: energies must lie in (0, kvp]");
        if (i > 0 && !(energies_kev[i] > energies_kev[i - 1]))
            throw ParameterError("spectrum: energies must be strictly increasing");
        if (!(weights[i] >= 0.0)) throw ParameterError("spectrum: weights must be nonnegative");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) throw ParameterError("spectrum: weights must sum to 1");
}

EnergySpectrum EnergySpectrum::monochromatic(double energy_kev) {
    if (!(energy_kev > 0.0)) throw ParameterError("monochromatic spectrum needs a positive energy");
    return EnergySpectrum{{energy_kev}, {1.0}};
}

MaterialTable::MaterialTable()
    : knots_{to_linear(kWater, kWaterDensity), to_linear(kCorticalBone, kBoneDensity),
             to_linear(kTitanium, kTitaniumDensity), to_linear(kAluminum, kAluminumDensity)} {}

MaterialTable::MaterialTable(std::array<std::vector<AttenuationKnot>, 4> knots) : knots_(std::move(knots)) {
    for (const auto& list : knots_) {
        if (list.size() < 2) throw ParameterError("material table needs at least two knots per material");
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (!(list[i].mu_per_mm > 0.0)) throw ParameterError("material table: mu must be positive");
            if (i > 0 && !(list[i].energy_kev > list[i - 1].energy_kev))
                throw ParameterError("material table: knot energies must increase");
        }
    }
}

double MaterialTable::min_energy() const {
    double e = 0.0;
    for (const auto& list : knots_) e = std::max(e, list.front().energy_kev);
    return e;
}

double MaterialTable::max_energy() const {
    double e = 1e300;
    for (const auto& list : knots_) e = std::min(e, list.back().energy_kev);
    return e;
}

const MaterialTable& MaterialTable::reference() {
    static const MaterialTable table;
    return table;
}

double attenuation_mu(Material material, double energy_kev, const MaterialTable& table) {
    const auto knots = table.knots(material);
    if (!(energy_kev >= knots.front().energy_kev) || !(energy_kev <= knots.back().energy_kev))
        throw RangeError("attenuation_mu: energy " + std::to_string(energy_kev) + " keV outside table range");
    const auto it = std::lower_bound(knots.begin(), knots.end(), energy_kev,
                                     [](const AttenuationKnot& k, double e) { return k.energy_kev < e; });
    if (it->energy_kev == energy_kev) return it->mu_per_mm;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double t = std::log(energy_kev / lo.energy_kev) / std::log(hi.energy_kev / lo.energy_kev);
    return std::exp(std::log(lo.mu_per_mm) + t * std::log(hi.mu_per_mm / lo.mu_per_mm));
}

EnergySpectrum build_spectrum(double kvp, double filtration_mm_al, int n_bins, const MaterialTable& table) {
    if (!(kvp >= 40.0 && kvp <= 150.0)) throw ParameterError("build_spectrum: kvp must lie in [40, 150]");
    if (n_bins < 1) throw ParameterError("build_spectrum: n_bins must be >= 1");
    if (!(filtration_mm_al >= 0.0)) throw ParameterError("build_spectrum: filtration must be >= 0");

    EnergySpectrum s;
    s.energies_kev.resize(static_cast<std::size_t>(n_bins));
    s.weights.resize(static_cast<std::size_t>(n_bins));
    const double width = (kvp - kSpectrumMinKev) / n_bins;
    double total = 0.0;
    for (int i = 0; i < n_bins; ++i) {
        const double e = kSpectrumMinKev + (i + 0.5) * width;
        const double kramers = (kvp - e) / e;
        const double filter = std::exp(-attenuation_mu(Material::Aluminum, e, table) * filtration_mm_al);
        s.energies_kev[static_cast<std::size_t>(i)] = e;
        s.weights[static_cast<std::size_t>(i)] = kramers * filter;
        total += kramers * filter;
    }
    for (auto& w : s.weights) w /= total;
    return s;
}

double effective_energy(const EnergySpectrum& spectrum) {
    double e = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) e += spectrum.weights[i] * spectrum.energies_kev[i];
    return e;
}

}  // namespace dmar
