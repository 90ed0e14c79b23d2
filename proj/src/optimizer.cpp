#include "dscn/optimizer.hpp"

#include "dscn/error.hpp"

#include <cmath>
#include <random>
#include <string>

namespace dscn {

AdamState make_adam_state(const std::vector<ParamView>& params, const AdamConfig& cfg) {
    AdamState s;
    s.config = cfg;
    for (const auto& p : params) {
        s.m.emplace_back(p.values.size(), 0.0);
        s.v.emplace_back(p.values.size(), 0.0);
    }
    return s;
}

void adam_step(const std::vector<ParamView>& params, const std::vector<NamedGradient>& grads,
               AdamState& state) {
    if (state.m.size() != params.size()) {
        throw ConfigError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                          std::to_string(params.size()));
    }
    // Trainable gradients come first and in parameter order; frozen ones are skipped.
    std::size_t gi = 0;
    auto next_trainable = [&]() -> const NamedGradient& {
        while (gi < grads.size() && grads[gi].frozen) ++gi;
        if (gi >= grads.size()) throw ConfigError("adam_step: fewer gradients than parameters");
        return grads[gi++];
    };

    std::vector<const NamedGradient*> matched;
    matched.reserve(params.size());
    for (const auto& p : params) {
        const NamedGradient& g = next_trainable();
        if (g.name != p.name || g.values.size() != p.values.size()) {
            throw ConfigError("adam_step: gradient '" + g.name + "' does not match parameter '" + p.name + "'");
        }
        for (std::size_t j = 0; j < g.values.size(); ++j) {
            if (!std::isfinite(g.values[j])) {
                throw NumericalError("adam_step: non-finite gradient in " + g.name + "[" + std::to_string(j) +
                                     "] at step " + std::to_string(state.t + 1), g.name);
            }
        }
        matched.push_back(&g);
    }

    const AdamConfig& c = state.config;
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = matched[i]->values;
        auto theta = params[i].values;
        for (std::size_t j = 0; j < theta.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

TrainResult train(const HyperCube& cube, const EndmemberMatrix& endmembers, const ModelConfig& cfg,
                  const TrainConfig& tc, const TrainProgress& progress) {
    if (tc.iterations == 0) throw ConfigError("train: iterations must be positive");
    if (tc.batch_size == 0) throw ConfigError("train: batch size must be at least 1");
    if (cube.bands != cfg.bands) {
        throw InputError("train: cube has " + std::to_string(cube.bands) + " bands, config expects " +
                         std::to_string(cfg.bands));
    }
    if (cube.pixel_count() < tc.batch_size) {
        throw InputError("train: " + std::to_string(cube.pixel_count()) + " pixels is fewer than batch size " +
                         std::to_string(tc.batch_size));
    }
    tc.weights.validate();

    TrainResult result{build_model(cfg, endmembers), {}};
    ModelParams& p = result.params;
    result.trace.reserve(tc.iterations);

    auto params = p.trainable();
    AdamState adam = make_adam_state(params, tc.adam);
    std::mt19937_64 rng(tc.seed);
    std::uniform_int_distribution<std::size_t> pick(0, cube.pixel_count() - 1);
    std::vector<std::size_t> batch(tc.batch_size);

    for (std::size_t it = 0; it < tc.iterations; ++it) {
        for (auto& i : batch) i = pick(rng);
        GradientResult g;
        try {
            g = model_gradients(gather_pixels(cube, batch), p, tc.weights);
        } catch (const NumericalError& e) {
            throw NumericalError("train: diverged at iteration " + std::to_string(it) + ": " + e.what(),
                                 e.tensor());
        }
        if (!std::isfinite(g.loss.total)) {
            throw NumericalError("train: loss is not finite at iteration " + std::to_string(it), "loss");
        }
        adam_step(params, g.gradients, adam);
        p.bn3_stats.update(g.bn3_moments);
        if (cfg.fusion == Fusion::Sparse) p.head_stats.update(g.head_moments);

        result.trace.push_back(g.loss);
        if (progress) progress(it, g.loss);
    }
    return result;
}

std::vector<double> windowed_loss_means(const std::vector<LossBreakdown>& trace, std::size_t window) {
    std::vector<double> means;
    if (window == 0) return means;
    for (std::size_t start = 0; start + window <= trace.size(); start += window) {
        double s = 0.0;
        for (std::size_t i = start; i < start + window; ++i) s += trace[i].total;
        means.push_back(s / static_cast<double>(window));
    }
    return means;
}

}  // namespace dscn
