#include "dscn/scene.hpp"

#include "dscn/error.hpp"
#include "dscn/objective.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace dscn {

void SceneSpec::validate() const {
    if (endmembers < 2) throw ConfigError("scene: K must be at least 2, got " + std::to_string(endmembers));
    if (bands < 8) throw ConfigError("scene: B must be at least 8, got " + std::to_string(bands));
    if (width == 0 || height == 0) throw ConfigError("scene: width and height must be positive");
    if (!(dirichlet_alpha > 0.0)) throw ConfigError("scene: Dirichlet alpha must be positive");
    if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("scene: SNR must be finite");
}

namespace {

constexpr int kMaxEndmemberDraws = 1000;

std::vector<double> random_signature(std::size_t bands, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> bump_count(3, 6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double B = static_cast<double>(bands);

    std::vector<double> s(bands, 0.0);
    const int bumps = bump_count(rng);
    for (int i = 0; i < bumps; ++i) {
        const double center = unit(rng) * (B - 1.0);
        const double width = B * (0.04 + 0.16 * unit(rng));
        const double amplitude = 0.2 + 0.8 * unit(rng);
        for (std::size_t b = 0; b < bands; ++b) {
            const double d = (static_cast<double>(b) - center) / width;
            s[b] += amplitude * std::exp(-0.5 * d * d);
        }
    }
    const double peak = *std::max_element(s.begin(), s.end());
    for (double& v : s) v /= peak;
    return s;
}

}  // namespace

Scene synth_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const std::size_t K = spec.endmembers, B = spec.bands;

    Scene scene;
    scene.endmembers = EndmemberMatrix(B, K);
    std::size_t accepted = 0;
    for (int draw = 0; accepted < K; ++draw) {
        if (draw >= kMaxEndmemberDraws) {
            throw ConfigError("scene: could not draw " + std::to_string(K) + " endmembers with pairwise angle >= " +
                              std::to_string(spec.min_separation) + " after " + std::to_string(kMaxEndmemberDraws) +
                              " draws; use more bands or fewer endmembers");
        }
        const auto candidate = random_signature(B, rng);
        bool separated = true;
        for (std::size_t k = 0; k < accepted && separated; ++k) {
            separated = sad(candidate, scene.endmembers.column(k)) >= spec.min_separation;
        }
        if (!separated) continue;
        std::copy(candidate.begin(), candidate.end(), scene.endmembers.column(accepted).begin());
        ++accepted;
    }

    scene.abundances = AbundanceMap(spec.width, spec.height, K);
    std::gamma_distribution<double> gamma(spec.dirichlet_alpha, 1.0);
    for (std::size_t p = 0; p < scene.abundances.pixel_count(); ++p) {
        auto y = scene.abundances.pixel(p);
        double sum = 0.0;
        while (!(sum > 0.0)) {
            sum = 0.0;
            for (double& v : y) {
                v = gamma(rng);
                sum += v;
            }
        }
        for (double& v : y) v /= sum;
    }

    scene.cube = mix(scene.endmembers, scene.abundances);
    if (spec.snr_db) {
        double power = 0.0;
        for (double v : scene.cube.data) power += v * v;
        power /= static_cast<double>(scene.cube.data.size());
        const double sigma = std::sqrt(power / std::pow(10.0, *spec.snr_db / 10.0));
        std::normal_distribution<double> noise(0.0, sigma);
        for (double& v : scene.cube.data) v += noise(rng);
    }
    return scene;
}

HyperCube mix(const EndmemberMatrix& endmembers, const AbundanceMap& abundances) {
    if (endmembers.count != abundances.count) {
        throw InputError("mix: " + std::to_string(endmembers.count) + " endmembers vs " +
                         std::to_string(abundances.count) + " abundances per pixel");
    }
    HyperCube cube(abundances.width, abundances.height, endmembers.bands);
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
        auto x = cube.pixel(p);
        const auto y = abundances.pixel(p);
        for (std::size_t k = 0; k < endmembers.count; ++k) {
            if (y[k] == 0.0) continue;
            const auto e = endmembers.column(k);
            for (std::size_t b = 0; b < x.size(); ++b) x[b] += e[b] * y[k];
        }
    }
    return cube;
}

double measured_snr_db(const HyperCube& clean, const HyperCube& noisy) {
    if (clean.data.size() != noisy.data.size() || clean.data.empty()) {
        throw InputError("measured_snr_db: cube size mismatch");
    }
    double signal = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < clean.data.size(); ++i) {
        signal += clean.data[i] * clean.data[i];
        const double d = noisy.data[i] - clean.data[i];
        noise += d * d;
    }
    return 10.0 * std::log10(signal / noise);
}

}  // namespace dscn
