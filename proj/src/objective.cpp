#include "dscn/objective.hpp"

#include "dscn/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dscn {

void LossWeights::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0)) {
        throw ConfigError("loss weights must be nonnegative");
    }
}

namespace {

struct AngleParts {
    double cosine;    // <u, v> with u, v unit vectors
    double sine;      // norm of the component of u orthogonal to v
    double norm_hat;  // ||x_hat||
};

// Decomposes x against x_hat. The angle is taken as atan2(sine, cosine),
// which agrees with arccos(clamped cosine) but stays accurate near 0 and pi.
AngleParts angle_parts(std::span<const double> x, std::span<const double> x_hat,
                       std::span<double> perp) {
    if (x.size() != x_hat.size()) {
        throw InputError("sad: spectra have " + std::to_string(x.size()) + " and " +
                         std::to_string(x_hat.size()) + " bands");
    }
    double nx = 0.0, nh = 0.0, dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        nx += x[i] * x[i];
        nh += x_hat[i] * x_hat[i];
        dot += x[i] * x_hat[i];
    }
    nx = std::sqrt(nx);
    nh = std::sqrt(nh);
    if (!(nx > 0.0) || !(nh > 0.0)) throw DomainError("sad: spectrum with zero norm");
    if (std::equal(x.begin(), x.end(), x_hat.begin())) {
        // Identical spectra: report an exact zero angle instead of rounding noise.
        std::fill(perp.begin(), perp.end(), 0.0);
        return {1.0, 0.0, nh};
    }
    const double cosine = std::clamp(dot / (nx * nh), -1.0, 1.0);
    double s2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double p = x[i] / nx - cosine * x_hat[i] / nh;
        if (!perp.empty()) perp[i] = p;
        s2 += p * p;
    }
    return {cosine, std::sqrt(s2), nh};
}

std::size_t band_count(const Tensor& t) { return t.c() * t.l(); }

}  // namespace

double sad(std::span<const double> x, std::span<const double> x_hat) {
    const auto parts = angle_parts(x, x_hat, {});
    return std::atan2(parts.sine, parts.cosine);
}

void sad_gradient(std::span<const double> x, std::span<const double> x_hat, std::span<double> grad) {
    if (grad.size() != x_hat.size()) throw InputError("sad_gradient: output size mismatch");
    const auto parts = angle_parts(x, x_hat, grad);
    // d angle / d x_hat = -(unit component of x orthogonal to x_hat) / ||x_hat||.
    if (parts.sine == 0.0) {
        std::fill(grad.begin(), grad.end(), 0.0);
        return;
    }
    const double scale = -1.0 / (parts.sine * parts.norm_hat);
    for (double& g : grad) g *= scale;
}

double similarity_c(std::span<const double> x, std::span<const double> x_hat) {
    return std::clamp(1.0 - sad(x, x_hat) / std::numbers::pi, kSimilarityFloor, 1.0);
}

double kl_term(double c) {
    if (!(c > 0.0)) throw DomainError("kl_term: similarity must be positive, got " + std::to_string(c));
    return -std::log(c);
}

LossBreakdown loss_total(const Tensor& x, const Tensor& x_hat, const Tensor& y_pre,
                         const std::vector<std::span<const double>>& params, const LossWeights& w) {
    w.validate();
    const std::size_t N = x.n();
    if (N == 0) throw InputError("loss_total: empty batch");
    if (x_hat.n() != N || y_pre.n() != N || band_count(x) != band_count(x_hat)) {
        throw InputError("loss_total: inconsistent batch dims x" + x.shape_string() + " x_hat" +
                         x_hat.shape_string() + " y" + y_pre.shape_string());
    }
    const std::size_t B = band_count(x);
    const std::size_t K = band_count(y_pre);

    LossBreakdown out;
    for (std::size_t n = 0; n < N; ++n) {
        std::span<const double> xs(x.data() + n * B, B);
        std::span<const double> hs(x_hat.data() + n * B, B);
        out.recon += kl_term(similarity_c(xs, hs));
        for (std::size_t k = 0; k < K; ++k) out.sparsity += std::abs(y_pre[n * K + k]);
    }
    out.recon /= static_cast<double>(N);
    out.sparsity /= static_cast<double>(N);
    for (const auto& p : params) {
        for (double v : p) out.decay += v * v;
    }
    out.total = w.lambda1 * out.recon + w.lambda2 * out.sparsity + w.lambda3 * out.decay;
    return out;
}

Tensor recon_gradient(const Tensor& x, const Tensor& x_hat, double lambda1) {
    const std::size_t N = x.n();
    const std::size_t B = band_count(x);
    Tensor g(x_hat.n(), x_hat.c(), x_hat.l());
    if (lambda1 == 0.0) return g;
    for (std::size_t n = 0; n < N; ++n) {
        std::span<const double> xs(x.data() + n * B, B);
        std::span<const double> hs(x_hat.data() + n * B, B);
        std::span<double> gs(g.data() + n * B, B);
        const double raw = 1.0 - sad(xs, hs) / std::numbers::pi;
        if (raw <= kSimilarityFloor || raw >= 1.0) continue;  // clamped: flat
        sad_gradient(xs, hs, gs);
        // d(-ln C)/d angle = 1 / (pi * C)
        const double scale = lambda1 / (static_cast<double>(N) * std::numbers::pi * raw);
        for (double& v : gs) v *= scale;
    }
    return g;
}

Tensor sparsity_gradient(const Tensor& y_pre, double lambda2) {
    Tensor g(y_pre.n(), y_pre.c(), y_pre.l());
    const double scale = lambda2 / static_cast<double>(y_pre.n());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = y_pre[i];
        g[i] = v > 0.0 ? scale : (v < 0.0 ? -scale : 0.0);
    }
    return g;
}

RmseReport RmseReport::scaled(double factor) const {
    RmseReport r = *this;
    for (double& v : r.per_material) v *= factor;
    r.average *= factor;
    return r;
}

RmseReport rmse_per_material(const AbundanceMap& estimate, const AbundanceMap& truth) {
    if (estimate.width != truth.width || estimate.height != truth.height || estimate.count != truth.count) {
        throw InputError("rmse: estimate is " + std::to_string(estimate.width) + "x" +
                         std::to_string(estimate.height) + "x" + std::to_string(estimate.count) +
                         " but ground truth is " + std::to_string(truth.width) + "x" +
                         std::to_string(truth.height) + "x" + std::to_string(truth.count));
    }
    const std::size_t P = estimate.pixel_count();
    const std::size_t K = estimate.count;
    if (P == 0 || K == 0) throw InputError("rmse: empty abundance map");
    RmseReport r;
    r.per_material.assign(K, 0.0);
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t k = 0; k < K; ++k) {
            const double d = estimate.data[p * K + k] - truth.data[p * K + k];
            r.per_material[k] += d * d;
        }
    }
    for (double& v : r.per_material) {
        v = std::sqrt(v / static_cast<double>(P));
        r.average += v;
    }
    r.average /= static_cast<double>(K);
    return r;
}

}  // namespace dscn
