#pragma once

#include "dscn/hsi.hpp"
#include "dscn/model.hpp"
#include "dscn/objective.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace dscn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t t = 0;
};

/// Zeroed moments shaped like `params`.
AdamState make_adam_state(const std::vector<ParamView>& params, const AdamConfig& cfg = {});

/// One bias-corrected Adam update. Gradients are matched to parameters by
/// name; frozen gradients are skipped. NumericalError on NaN/Inf gradients.
void adam_step(const std::vector<ParamView>& params, const std::vector<NamedGradient>& grads,
               AdamState& state);

struct TrainConfig {
    std::size_t iterations = 5000;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    LossWeights weights;
    AdamConfig adam;
};

struct TrainResult {
    ModelParams params;
    std::vector<LossBreakdown> trace;  // one entry per iteration
};

/// Called after each iteration with (iteration index, loss).
using TrainProgress = std::function<void(std::size_t, const LossBreakdown&)>;

/// Mini-batch Adam training with batches drawn with replacement from a
/// generator seeded by tc.seed. The endmember matrix stays frozen.
TrainResult train(const HyperCube& cube, const EndmemberMatrix& endmembers, const ModelConfig& cfg,
                  const TrainConfig& tc, const TrainProgress& progress = {});

/// Non-overlapping window means of the total loss (the last partial window is dropped).
std::vector<double> windowed_loss_means(const std::vector<LossBreakdown>& trace, std::size_t window);

}  // namespace dscn
