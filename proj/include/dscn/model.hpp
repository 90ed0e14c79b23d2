#pragma once

#include "dscn/hsi.hpp"
#include "dscn/nn.hpp"
#include "dscn/objective.hpp"
#include "dscn/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dscn {

enum class Fusion {
    Sparse,        // DSCN-S: fc -> batch norm -> ReLU -> L1 renormalization
    Probabilistic  // DSCN-P: fc -> softmax
};

const char* to_string(Fusion f) noexcept;

struct BlockShape {
    std::size_t filters = 0;
    std::size_t kernel_width = 0;

    friend bool operator==(const BlockShape&, const BlockShape&) = default;
};

struct ModelConfig {
    std::size_t bands = 0;
    std::size_t endmembers = 0;
    BlockShape block1{16, 5};
    BlockShape block2{32, 5};
    BlockShape block3{8, 3};
    std::size_t pool_window = 2;
    std::size_t pool_stride = 2;
    Fusion fusion = Fusion::Probabilistic;
    nn::MomentAxes spectral_norm_mode = nn::MomentAxes::SpectralPerSample;
    double norm_epsilon = 1e-5;
    double bn_momentum = 0.9;
    std::uint64_t seed = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Spectral lengths after each stage of the encoder.
struct ModelShapes {
    std::size_t conv1 = 0, pool1 = 0;
    std::size_t conv2 = 0, pool2 = 0;
    std::size_t conv3 = 0;
    std::size_t flattened = 0;  // block3 filters * conv3

    std::string describe() const;
};

/// Validates `cfg` and derives stage lengths. ConfigError when any stage
/// does not fit or the flattened dimension is smaller than K.
ModelShapes model_shapes(const ModelConfig& cfg);

struct ParamView {
    std::string name;
    std::span<double> values;
};

struct ConstParamView {
    std::string name;
    std::span<const double> values;
};

struct NamedGradient {
    std::string name;
    std::vector<double> values;
    bool frozen = false;  // true for the endmember matrix
};

struct ModelParams {
    ModelConfig config;
    Tensor conv1, conv2, conv3;  // (out, in, tap)
    nn::NormAffine sn1, sn2;
    nn::NormAffine bn3;
    nn::RunningStats bn3_stats;
    Tensor fc;                    // (K, flattened, 1)
    nn::NormAffine head_bn;       // DSCN-S only
    nn::RunningStats head_stats;  // DSCN-S only
    EndmemberMatrix endmembers;   // frozen decoder weights

    /// Trainable tensors in a fixed order (the endmember matrix is excluded).
    std::vector<ParamView> trainable();
    std::vector<ConstParamView> trainable() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Random initialization: uniform(-a, a), a = sqrt(3 / fan_in) for conv
/// and dense weights; norms start at gamma = 1, beta = 0. Deterministic in cfg.seed.
ModelParams build_model(const ModelConfig& cfg, const EndmemberMatrix& endmembers);

enum class Mode { Training, Inference };

/// Intermediate values kept for the backward pass.
struct EncoderCache {
    Mode mode = Mode::Inference;
    Tensor input;
    Tensor conv1_out;
    nn::NormCache sn1;
    Tensor sn1_out;
    nn::PoolResult pool1;
    Tensor conv2_out;
    nn::NormCache sn2;
    Tensor sn2_out;
    nn::PoolResult pool2;
    Tensor conv3_out;
    nn::NormCache bn3;
    Tensor bn3_out;
    Tensor flat;      // relu(bn3_out), (N, C3, L3)
    Tensor logits;    // fc output, (N, K, 1)
    nn::NormCache head_bn;
    Tensor head_bn_out;
    Tensor head_relu;  // DSCN-S pre-normalization activation
};

struct EncoderOutput {
    Tensor abundances;     // (N, K, 1), rows on the simplex
    Tensor pre_normalized;  // penalized by the sparsity term
    EncoderCache cache;
};

/// x: (N, 1, B). Training mode uses batch moments in the batch norms;
/// inference mode uses the running statistics.
EncoderOutput encoder_forward(const Tensor& x, const ModelParams& p, Mode mode);

/// Backpropagates gradients on the abundances and on the pre-normalized
/// activation. Returns one gradient per trainable tensor, in trainable() order.
std::vector<NamedGradient> encoder_backward(const EncoderCache& cache, const ModelParams& p,
                                            const Tensor& grad_abundances, const Tensor& grad_pre);

/// Default tolerance on simplex membership of decoder inputs.
inline constexpr double kDecoderSimplexTol = 1e-4;

/// x_hat = W_d * y per sample. y: (N, K, 1) -> (N, 1, B). ContractError if a
/// row of y is off the simplex by more than `tol`.
Tensor decoder_forward(const Tensor& abundances, const EndmemberMatrix& endmembers,
                       double tol = kDecoderSimplexTol);

/// Pulls a decoder output gradient back to the abundances: W_d^T g.
Tensor decoder_backward(const Tensor& grad_out, const EndmemberMatrix& endmembers);

struct GradientResult {
    LossBreakdown loss;
    std::vector<NamedGradient> gradients;  // trainable() order, then frozen "endmembers"
    nn::BatchMoments bn3_moments;
    nn::BatchMoments head_moments;  // empty for DSCN-P
};

/// Loss and gradients of every parameter on one batch (training mode).
/// NumericalError naming the tensor if any gradient is NaN/Inf.
GradientResult model_gradients(const Tensor& x, const ModelParams& p, const LossWeights& w);

/// Loss alone, evaluated exactly as model_gradients does.
LossBreakdown model_loss(const Tensor& x, const ModelParams& p, const LossWeights& w);

/// Inference over a full cube, processed in chunks of `chunk` pixels.
AbundanceMap unmix_cube(const ModelParams& p, const HyperCube& cube, std::size_t chunk = 256);

}  // namespace dscn
