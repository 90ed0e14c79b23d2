#pragma once

#include "dscn/hsi.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>

namespace dscn {

struct SceneSpec {
    std::size_t endmembers = 3;  // K >= 2
    std::size_t bands = 64;      // B >= 8
    std::size_t width = 32;
    std::size_t height = 32;
    std::optional<double> snr_db;  // nullopt: noiseless
    double dirichlet_alpha = 1.0;
    std::uint64_t seed = 0;
    double min_separation = 0.15;  // pairwise spectral angle floor, radians

    void validate() const;
};

struct Scene {
    HyperCube cube;
    EndmemberMatrix endmembers;
    AbundanceMap abundances;
};

/// Linear-mixing scene: smooth Gaussian-bump endmembers (peak 1, pairwise
/// angle >= min_separation), Dirichlet abundances, optional white Gaussian
/// noise at the requested SNR (mean signal power over all pixels and bands).
Scene synth_scene(const SceneSpec& spec);

/// 10 log10(mean signal power / mean noise power).
double measured_snr_db(const HyperCube& clean, const HyperCube& noisy);

/// Noise-free cube x = E y for every pixel.
HyperCube mix(const EndmemberMatrix& endmembers, const AbundanceMap& abundances);

}  // namespace dscn
