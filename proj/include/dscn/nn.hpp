#pragma once

#include "dscn/tensor.hpp"

#include <cstddef>
#include <vector>

// Layer primitives with explicit forward/backward passes.
//
// Every forward is a pure function of its inputs. State needed by the
// backward pass is returned to the caller (a cache struct or the forward
// input itself) instead of being stored inside a layer object.
namespace dscn::nn {

// ---------------------------------------------------------------------------
// 1D convolution over the spectral axis, no bias.
// ---------------------------------------------------------------------------

struct ConvGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;  // zeros on both ends
};

/// floor((L + 2p - w) / s) + 1, or ConfigError when the kernel does not fit.
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel_width, ConvGeometry g);

/// x: (N, C_in, L), kernel: (C_out, C_in, w) -> (N, C_out, L').
Tensor conv1d_forward(const Tensor& x, const Tensor& kernel, ConvGeometry g);

struct ConvGrads {
    Tensor input;
    Tensor kernel;
};

/// Adjoint of conv1d_forward. `cached_input` is the forward input; an empty
/// tensor means the forward was never run and raises UsageError.
ConvGrads conv1d_backward(const Tensor& grad_out, const Tensor& cached_input, const Tensor& kernel,
                          ConvGeometry g);

// ---------------------------------------------------------------------------
// Max pooling. Ties go to the lowest index.
// ---------------------------------------------------------------------------

struct PoolResult {
    Tensor output;
    std::vector<std::size_t> argmax;  // position within the input row, one per output entry
    std::size_t input_length = 0;
};

std::size_t maxpool1d_output_length(std::size_t length, std::size_t window, std::size_t stride);
PoolResult maxpool1d_forward(const Tensor& x, std::size_t window, std::size_t stride);
Tensor maxpool1d_backward(const Tensor& grad_out, const PoolResult& cache);

// ---------------------------------------------------------------------------
// ReLU. Subgradient at exactly 0 is 0.
// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& grad_out, const Tensor& cached_input);

// ---------------------------------------------------------------------------
// Normalization (spectral norm and batch norm share one kernel).
// ---------------------------------------------------------------------------

/// Which entries share a mean/variance.
enum class MomentAxes {
    SpectralPerSample,          // one group per (sample, channel), over positions
    SpectralAndBatch,           // one group per channel, over (sample, position)
    BatchAndSpectralPerChannel  // batch norm; same grouping as SpectralAndBatch
};

struct NormAffine {
    std::vector<double> gamma;
    std::vector<double> beta;
    double epsilon = 1e-5;
    MomentAxes axes = MomentAxes::SpectralPerSample;

    /// gamma = 1, beta = 0.
    static NormAffine identity(std::size_t channels, MomentAxes axes, double epsilon = 1e-5);
    std::size_t channels() const noexcept { return gamma.size(); }

    friend bool operator==(const NormAffine&, const NormAffine&) = default;
};

/// Per-channel moments of a training batch, fed to RunningStats::update.
struct BatchMoments {
    std::vector<double> mean;
    std::vector<double> var;
};

/// Exponential running moments used by batch norm at inference time.
/// running = momentum * running + (1 - momentum) * batch; the first update copies.
struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;
    double momentum = 0.9;
    bool initialized = false;

    static RunningStats empty(std::size_t channels, double momentum = 0.9);
    void update(const BatchMoments& batch);

    friend bool operator==(const RunningStats&, const RunningStats&) = default;
};

struct NormCache {
    Tensor normalized;            // x_hat, before the affine transform
    std::vector<double> inv_std;  // one per group
    MomentAxes axes = MomentAxes::SpectralPerSample;
    bool moments_from_input = true;  // false when running stats were used
    BatchMoments moments;            // per-channel batch moments (pooled modes only)
};

struct NormGrads {
    Tensor input;
    std::vector<double> gamma;
    std::vector<double> beta;
};

/// Instance-style normalization over the spectral axis, or pooled
/// (sample, position) moments when a.axes == SpectralAndBatch. Always uses
/// the moments of `x` itself; there is no inference variant.
Tensor spectral_norm_forward(const Tensor& x, const NormAffine& a, NormCache* cache = nullptr);

/// Per-channel batch norm. Training uses moments over (sample, position);
/// inference uses `running`, which must have been updated at least once.
Tensor batch_norm_forward(const Tensor& x, const NormAffine& a, const RunningStats& running,
                          bool training, NormCache* cache = nullptr);

NormGrads norm_backward(const Tensor& grad_out, const NormCache& cache, const NormAffine& a);

// ---------------------------------------------------------------------------
// Fully connected (no bias), softmax, L1 renormalization.
// Vector batches are (N, D, 1); fc flattens (C, L) of its input.
// ---------------------------------------------------------------------------

/// x: (N, C, L) with C*L == in_dim, weights: (out_dim, in_dim, 1) -> (N, out_dim, 1).
Tensor fc_forward(const Tensor& x, const Tensor& weights);

struct FcGrads {
    Tensor input;  // shaped like the forward input
    Tensor weights;
};

FcGrads fc_backward(const Tensor& grad_out, const Tensor& cached_input, const Tensor& weights);

/// Row-wise softmax with max subtraction.
Tensor softmax_forward(const Tensor& h);
/// Backward given the softmax output p: g_in = p * (g - <g, p>).
Tensor softmax_backward(const Tensor& grad_out, const Tensor& probabilities);

inline constexpr double kL1Floor = 1e-9;

/// v / ||v||_1 per row; rows with ||v||_1 < floor become uniform 1/K.
/// Negative entries raise ContractError.
Tensor l1_normalize_forward(const Tensor& v, double floor = kL1Floor);
Tensor l1_normalize_backward(const Tensor& grad_out, const Tensor& cached_input,
                             double floor = kL1Floor);

}  // namespace dscn::nn
