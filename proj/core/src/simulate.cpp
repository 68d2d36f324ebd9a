#include "dmar/simulate.hpp"

#include <algorithm>

#include "dmar/error.hpp"
#include "dmar/rng.hpp"

namespace dmar {

std::size_t select_slice(const MaskVolume& metal_mask) {
    std::size_t best = metal_mask.nz() / 2;
    std::size_t best_area = 0;
    const std::size_t plane = metal_mask.nx() * metal_mask.ny();
    for (std::size_t z = 0; z < metal_mask.nz(); ++z) {
        std::size_t area = 0;
        for (std::size_t i = 0; i < plane; ++i) area += metal_mask.data[z * plane + i] ? 1 : 0;
        if (area > best_area) {
            best_area = area;
            best = z;
        }
    }
    return best;
}

Sinogram degrade_slice(const std::array<Sinogram, 3>& paths, const EnergySpectrum& spectrum,
                       const NoiseParams& noise, bool photon_noise, std::uint64_t seed) {
    const Sinogram primary = polychromatic_project(paths, spectrum);
    const Sinogram with_scatter = projection_from_intensity(apply_scatter(intensity_from_projection(primary), noise));
    if (!photon_noise) return with_scatter;
    const Sinogram counts = apply_photon_noise(with_scatter, noise, seed);
    const Sinogram noisy = apply_electronic_noise(counts, noise.sigma_e, mix64(seed ^ 0xE1EC7));
    return counts_to_projection(noisy, noise.n0);
}

CasePair simulate_case(const Phantom& phantom, const RestorationPlan& plan, const SimulationParams& params,
                       std::uint64_t seed, std::optional<std::vector<std::size_t>> slices) {
    if (!phantom.hu.same_shape(phantom.labels)) throw ShapeError("simulate_case: label volume shape mismatch");
    params.noise.validate();
    const auto& hu = phantom.hu;
    const double pixel = hu.spacing_mm[0];
    params.geometry.check_covers(hu.ny(), hu.nx(), pixel);

    const MaskVolume metal = rasterize_metal(plan, phantom.labels);
    const MaskVolume edges = edge_mask(phantom.labels);
    const MaskVolume no_metal(hu.dims, hu.spacing_mm, 0);
    const MaterialMap with_metal = decompose_materials(hu, metal, params.thresholds);
    const MaterialMap without_metal = decompose_materials(hu, no_metal, params.thresholds);

    const EnergySpectrum poly = build_spectrum(params.spectrum);
    const double e_eff = effective_energy(poly);
    const EnergySpectrum spectrum = params.polychromatic ? poly : EnergySpectrum::monochromatic(e_eff);
    const double mu_w = attenuation_mu(Material::Water, e_eff);

    CasePair out;
    out.slices = slices.value_or(std::vector<std::size_t>{select_slice(metal)});
    if (out.slices.empty()) throw ParameterError("simulate_case: no slices requested");
    for (auto z : out.slices)
        if (z >= hu.nz()) throw RangeError("simulate_case: slice index out of range");
    out.effective_energy_kev = e_eff;
    out.mu_water = mu_w;

    const std::array<std::size_t, 3> dims{hu.nx(), hu.ny(), out.slices.size()};
    out.clean = Volume(dims, hu.spacing_mm);
    out.artifact = Volume(dims, hu.spacing_mm);
    out.metal_mask = MaskVolume(dims, hu.spacing_mm);
    out.edge = MaskVolume(dims, hu.spacing_mm);

    ReconParams recon;
    recon.filter = params.filter;
    recon.rows = hu.ny();
    recon.cols = hu.nx();
    recon.pixel_mm = pixel;

    for (std::size_t i = 0; i < out.slices.size(); ++i) {
        const std::size_t z = out.slices[i];
        SliceSinograms sinos;
        sinos.clean = monochromatic_project(path_lengths(material_slice(without_metal, z), params.geometry), e_eff);

        const auto paths = path_lengths(material_slice(with_metal, z), params.geometry);
        const std::uint64_t slice_seed = mix64(seed ^ (0x5A1CE000ULL + z));
        sinos.artifact = degrade_slice(paths, spectrum, params.noise, params.photon_noise, slice_seed);
        sinos.metal_path = paths[2];

        out.clean.set_slice(i, mu_to_hu(fbp(sinos.clean, recon), mu_w));
        out.artifact.set_slice(i, mu_to_hu(fbp(sinos.artifact, recon), mu_w));
        out.metal_mask.set_slice(i, metal.slice(z));
        out.edge.set_slice(i, edges.slice(z));
        out.sinograms.push_back(std::move(sinos));
    }
    return out;
}

}  // namespace dmar
