#pragma once

#include "dscn/hsi.hpp"
#include "dscn/tensor.hpp"

#include <span>
#include <vector>

namespace dscn {

/// Weights of the reconstruction, sparsity and weight-decay terms.
struct LossWeights {
    double lambda1 = 10.0;
    double lambda2 = 0.4;
    double lambda3 = 1e-5;

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double recon = 0.0;     // batch mean of -ln C(x, x_hat)
    double sparsity = 0.0;  // batch mean of ||y_pre||_1
    double decay = 0.0;     // sum of squared L2 norms of trainable tensors
};

inline constexpr double kSimilarityFloor = 1e-7;

/// Spectral angle in [0, pi]. DomainError if either spectrum has zero norm.
double sad(std::span<const double> x, std::span<const double> x_hat);

/// d sad / d x_hat, written into `grad`. Zero at perfect alignment.
void sad_gradient(std::span<const double> x, std::span<const double> x_hat, std::span<double> grad);

/// 1 - sad/pi, clamped to [kSimilarityFloor, 1].
double similarity_c(std::span<const double> x, std::span<const double> x_hat);

/// KL divergence of a point mass at 1 against C: -ln C. DomainError for C <= 0.
double kl_term(double c);

/// Loss over a batch. `x` and `x_hat` are (N, 1, B) or (N, B, 1); `y_pre`
/// is the activation whose L1 norm is penalized; `params` lists the
/// trainable tensors entering the decay term.
LossBreakdown loss_total(const Tensor& x, const Tensor& x_hat, const Tensor& y_pre,
                         const std::vector<std::span<const double>>& params, const LossWeights& w);

/// Gradient of lambda1 * recon with respect to x_hat (same shape as x_hat).
Tensor recon_gradient(const Tensor& x, const Tensor& x_hat, double lambda1);

/// Gradient of lambda2 * sparsity with respect to y_pre.
Tensor sparsity_gradient(const Tensor& y_pre, double lambda2);

struct RmseReport {
    std::vector<double> per_material;
    double average = 0.0;

    /// Copy multiplied by `factor` (100 gives the x10^-2 table convention).
    RmseReport scaled(double factor) const;
};

/// Per-material RMSE over pixels, and its mean over materials.
RmseReport rmse_per_material(const AbundanceMap& estimate, const AbundanceMap& truth);

}  // namespace dscn
