#include "dscn/nn.hpp"

#include "dscn/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dscn::nn {

namespace {

std::string dims(std::size_t a, std::size_t b, std::size_t c) {
    return "(" + std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c) + ")";
}

// Output positions t with 0 <= t*stride + tap - padding < length, as [first, last).
struct TapRange {
    std::size_t first;
    std::size_t last;
};

TapRange valid_outputs(std::size_t tap, std::size_t length, std::size_t out_length, ConvGeometry g) {
    std::size_t first = 0;
    if (g.padding > tap) first = (g.padding - tap + g.stride - 1) / g.stride;
    if (length + g.padding <= tap) return {0, 0};
    std::size_t last = (length - 1 + g.padding - tap) / g.stride + 1;
    last = std::min(last, out_length);
    if (first >= last) return {0, 0};
    return {first, last};
}

void check_conv_shapes(const Tensor& x, const Tensor& kernel) {
    if (kernel.empty()) throw ConfigError("conv1d: empty kernel bank");
    if (x.c() != kernel.c()) {
        throw ConfigError("conv1d: input has " + std::to_string(x.c()) +
                          " channels but kernel bank " + kernel.shape_string() + " expects " +
                          std::to_string(kernel.c()));
    }
}

}  // namespace

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel_width, ConvGeometry g) {
    if (g.stride == 0) throw ConfigError("conv1d: stride must be positive");
    if (kernel_width == 0) throw ConfigError("conv1d: kernel width must be positive");
    const std::size_t padded = length + 2 * g.padding;
    if (padded < kernel_width) {
        throw ConfigError("conv1d: kernel width " + std::to_string(kernel_width) +
                          " exceeds padded length " + std::to_string(padded));
    }
    return (padded - kernel_width) / g.stride + 1;
}

Tensor conv1d_forward(const Tensor& x, const Tensor& kernel, ConvGeometry g) {
    check_conv_shapes(x, kernel);
    const std::size_t N = x.n(), C = x.c(), L = x.l();
    const std::size_t O = kernel.n(), W = kernel.l();
    const std::size_t Lo = conv1d_output_length(L, W, g);

    Tensor out(N, O, Lo);
    for (std::size_t tap = 0; tap < W; ++tap) {
        const auto [t0, t1] = valid_outputs(tap, L, Lo, g);
        if (t0 == t1) continue;
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t o = 0; o < O; ++o) {
                double* dst = &out(n, o, 0);
                for (std::size_t c = 0; c < C; ++c) {
                    const double w = kernel(o, c, tap);
                    const double* src = &x(n, c, 0);
                    for (std::size_t t = t0; t < t1; ++t) {
                        dst[t] += w * src[t * g.stride + tap - g.padding];
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv1d_backward(const Tensor& grad_out, const Tensor& cached_input, const Tensor& kernel,
                          ConvGeometry g) {
    if (cached_input.empty()) throw UsageError("conv1d_backward: no cached forward input");
    check_conv_shapes(cached_input, kernel);
    const std::size_t N = cached_input.n(), C = cached_input.c(), L = cached_input.l();
    const std::size_t O = kernel.n(), W = kernel.l();
    const std::size_t Lo = conv1d_output_length(L, W, g);
    if (grad_out.n() != N || grad_out.c() != O || grad_out.l() != Lo) {
        throw ConfigError("conv1d_backward: grad_out " + grad_out.shape_string() +
                          " does not match forward output " + dims(N, O, Lo));
    }

    ConvGrads grads{Tensor(N, C, L), Tensor(O, C, W)};
    for (std::size_t tap = 0; tap < W; ++tap) {
        const auto [t0, t1] = valid_outputs(tap, L, Lo, g);
        if (t0 == t1) continue;
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t o = 0; o < O; ++o) {
                const double* go = &grad_out(n, o, 0);
                for (std::size_t c = 0; c < C; ++c) {
                    const double w = kernel(o, c, tap);
                    const double* src = &cached_input(n, c, 0);
                    double* dx = &grads.input(n, c, 0);
                    double dw = 0.0;
                    for (std::size_t t = t0; t < t1; ++t) {
                        const std::size_t i = t * g.stride + tap - g.padding;
                        dx[i] += w * go[t];
                        dw += go[t] * src[i];
                    }
                    grads.kernel(o, c, tap) += dw;
                }
            }
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------

std::size_t maxpool1d_output_length(std::size_t length, std::size_t window, std::size_t stride) {
    if (window == 0 || stride == 0) throw ConfigError("maxpool1d: window and stride must be positive");
    if (window > length) {
        throw ConfigError("maxpool1d: window " + std::to_string(window) + " exceeds length " +
                          std::to_string(length));
    }
    return (length - window) / stride + 1;
}

PoolResult maxpool1d_forward(const Tensor& x, std::size_t window, std::size_t stride) {
    const std::size_t Lo = maxpool1d_output_length(x.l(), window, stride);
    PoolResult r{Tensor(x.n(), x.c(), Lo), {}, x.l()};
    r.argmax.resize(r.output.size());
    std::size_t k = 0;
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const double* row = &x(n, c, 0);
            for (std::size_t t = 0; t < Lo; ++t, ++k) {
                std::size_t best = t * stride;
                for (std::size_t i = best + 1; i < t * stride + window; ++i) {
                    if (row[i] > row[best]) best = i;
                }
                r.output[k] = row[best];
                r.argmax[k] = best;
            }
        }
    }
    return r;
}

Tensor maxpool1d_backward(const Tensor& grad_out, const PoolResult& cache) {
    if (cache.argmax.empty()) throw UsageError("maxpool1d_backward: no cached forward pass");
    if (!grad_out.same_shape(cache.output)) {
        throw ConfigError("maxpool1d_backward: grad_out " + grad_out.shape_string() +
                          " does not match forward output " + cache.output.shape_string());
    }
    Tensor gx(grad_out.n(), grad_out.c(), cache.input_length);
    const std::size_t Lo = grad_out.l();
    for (std::size_t row = 0; row < grad_out.n() * grad_out.c(); ++row) {
        for (std::size_t t = 0; t < Lo; ++t) {
            const std::size_t k = row * Lo + t;
            gx[row * cache.input_length + cache.argmax[k]] += grad_out[k];
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& cached_input) {
    if (cached_input.empty()) throw UsageError("relu_backward: no cached forward input");
    if (!grad_out.same_shape(cached_input)) {
        throw ConfigError("relu_backward: grad_out " + grad_out.shape_string() +
                          " does not match input " + cached_input.shape_string());
    }
    Tensor gx = grad_out;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        if (!(cached_input[i] > 0.0)) gx[i] = 0.0;
    }
    return gx;
}

// ---------------------------------------------------------------------------

NormAffine NormAffine::identity(std::size_t channels, MomentAxes axes, double epsilon) {
    return NormAffine{std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0),
                      epsilon, axes};
}

RunningStats RunningStats::empty(std::size_t channels, double momentum) {
    return RunningStats{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0),
                        momentum, false};
}

void RunningStats::update(const BatchMoments& batch) {
    if (batch.mean.size() != mean.size() || batch.var.size() != var.size()) {
        throw ConfigError("RunningStats::update: channel count mismatch");
    }
    if (!initialized) {
        mean = batch.mean;
        var = batch.var;
        initialized = true;
        return;
    }
    for (std::size_t c = 0; c < mean.size(); ++c) {
        mean[c] = momentum * mean[c] + (1.0 - momentum) * batch.mean[c];
        var[c] = momentum * var[c] + (1.0 - momentum) * batch.var[c];
    }
}

namespace {

void check_affine(const Tensor& x, const NormAffine& a, const char* who) {
    if (a.gamma.size() != x.c() || a.beta.size() != x.c()) {
        throw ConfigError(std::string(who) + ": affine has " + std::to_string(a.gamma.size()) +
                          "/" + std::to_string(a.beta.size()) + " gamma/beta entries for " +
                          std::to_string(x.c()) + " channels");
    }
    if (!(a.epsilon > 0.0)) throw ConfigError(std::string(who) + ": epsilon must be positive");
}

// Normalizes with moments computed from x over the groups implied by `axes`.
Tensor normalize_with_input_moments(const Tensor& x, const NormAffine& a, MomentAxes axes,
                                    NormCache* cache) {
    const std::size_t N = x.n(), C = x.c(), L = x.l();
    Tensor xhat(N, C, L);
    Tensor out(N, C, L);
    std::vector<double> inv_std;
    BatchMoments moments;

    if (axes == MomentAxes::SpectralPerSample) {
        inv_std.resize(N * C);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                const double* row = &x(n, c, 0);
                double mean = 0.0;
                for (std::size_t l = 0; l < L; ++l) mean += row[l];
                mean /= static_cast<double>(L);
                double var = 0.0;
                for (std::size_t l = 0; l < L; ++l) var += (row[l] - mean) * (row[l] - mean);
                var /= static_cast<double>(L);
                const double is = 1.0 / std::sqrt(var + a.epsilon);
                inv_std[n * C + c] = is;
                for (std::size_t l = 0; l < L; ++l) {
                    const double h = (row[l] - mean) * is;
                    xhat(n, c, l) = h;
                    out(n, c, l) = a.gamma[c] * h + a.beta[c];
                }
            }
        }
    } else {
        inv_std.resize(C);
        moments.mean.assign(C, 0.0);
        moments.var.assign(C, 0.0);
        const double count = static_cast<double>(N * L);
        for (std::size_t c = 0; c < C; ++c) {
            double mean = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t l = 0; l < L; ++l) mean += x(n, c, l);
            }
            mean /= count;
            double var = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t l = 0; l < L; ++l) var += (x(n, c, l) - mean) * (x(n, c, l) - mean);
            }
            var /= count;
            moments.mean[c] = mean;
            moments.var[c] = var;
            const double is = 1.0 / std::sqrt(var + a.epsilon);
            inv_std[c] = is;
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t l = 0; l < L; ++l) {
                    const double h = (x(n, c, l) - mean) * is;
                    xhat(n, c, l) = h;
                    out(n, c, l) = a.gamma[c] * h + a.beta[c];
                }
            }
        }
    }

    if (cache) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->axes = axes;
        cache->moments_from_input = true;
        cache->moments = std::move(moments);
    }
    return out;
}

}  // namespace

Tensor spectral_norm_forward(const Tensor& x, const NormAffine& a, NormCache* cache) {
    check_affine(x, a, "spectral_norm_forward");
    if (a.axes == MomentAxes::BatchAndSpectralPerChannel) {
        throw ConfigError("spectral_norm_forward: moment axes must be SpectralPerSample or SpectralAndBatch");
    }
    return normalize_with_input_moments(x, a, a.axes, cache);
}

Tensor batch_norm_forward(const Tensor& x, const NormAffine& a, const RunningStats& running,
                          bool training, NormCache* cache) {
    check_affine(x, a, "batch_norm_forward");
    if (training) {
        if (x.n() * x.l() < 2) {
            throw InputError("batch_norm_forward: training needs at least 2 values per channel, got " +
                             std::to_string(x.n() * x.l()));
        }
        return normalize_with_input_moments(x, a, MomentAxes::BatchAndSpectralPerChannel, cache);
    }

    if (!running.initialized) {
        throw UsageError("batch_norm_forward: inference requires running statistics from at least one training update");
    }
    if (running.mean.size() != x.c() || running.var.size() != x.c()) {
        throw ConfigError("batch_norm_forward: running stats channel count mismatch");
    }
    const std::size_t N = x.n(), C = x.c(), L = x.l();
    Tensor xhat(N, C, L);
    Tensor out(N, C, L);
    std::vector<double> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(running.var[c] + a.epsilon);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t l = 0; l < L; ++l) {
                const double h = (x(n, c, l) - running.mean[c]) * inv_std[c];
                xhat(n, c, l) = h;
                out(n, c, l) = a.gamma[c] * h + a.beta[c];
            }
        }
    }
    if (cache) {
        cache->normalized = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->axes = MomentAxes::BatchAndSpectralPerChannel;
        cache->moments_from_input = false;
        cache->moments = {};
    }
    return out;
}

NormGrads norm_backward(const Tensor& grad_out, const NormCache& cache, const NormAffine& a) {
    if (cache.normalized.empty()) throw UsageError("norm_backward: no cached forward pass");
    if (!grad_out.same_shape(cache.normalized)) {
        throw ConfigError("norm_backward: grad_out " + grad_out.shape_string() +
                          " does not match forward output " + cache.normalized.shape_string());
    }
    const Tensor& xhat = cache.normalized;
    const std::size_t N = xhat.n(), C = xhat.c(), L = xhat.l();
    NormGrads g{Tensor(N, C, L), std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};

    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t l = 0; l < L; ++l) {
                g.gamma[c] += grad_out(n, c, l) * xhat(n, c, l);
                g.beta[c] += grad_out(n, c, l);
            }
        }
    }

    if (!cache.moments_from_input) {
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                const double s = a.gamma[c] * cache.inv_std[c];
                for (std::size_t l = 0; l < L; ++l) g.input(n, c, l) = grad_out(n, c, l) * s;
            }
        }
        return g;
    }

    // dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) within each group.
    if (cache.axes == MomentAxes::SpectralPerSample) {
        const double M = static_cast<double>(L);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t l = 0; l < L; ++l) {
                    const double d = grad_out(n, c, l) * a.gamma[c];
                    s1 += d;
                    s2 += d * xhat(n, c, l);
                }
                const double is = cache.inv_std[n * C + c];
                for (std::size_t l = 0; l < L; ++l) {
                    const double d = grad_out(n, c, l) * a.gamma[c];
                    g.input(n, c, l) = is * (d - s1 / M - xhat(n, c, l) * s2 / M);
                }
            }
        }
    } else {
        const double M = static_cast<double>(N * L);
        for (std::size_t c = 0; c < C; ++c) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t l = 0; l < L; ++l) {
                    const double d = grad_out(n, c, l) * a.gamma[c];
                    s1 += d;
                    s2 += d * xhat(n, c, l);
                }
            }
            const double is = cache.inv_std[c];
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t l = 0; l < L; ++l) {
                    const double d = grad_out(n, c, l) * a.gamma[c];
                    g.input(n, c, l) = is * (d - s1 / M - xhat(n, c, l) * s2 / M);
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------

Tensor fc_forward(const Tensor& x, const Tensor& weights) {
    const std::size_t in_dim = x.c() * x.l();
    if (weights.c() != in_dim || weights.l() != 1) {
        throw ConfigError("fc_forward: weights " + weights.shape_string() + " cannot consume input " +
                          x.shape_string() + " (flattened dim " + std::to_string(in_dim) + ")");
    }
    const std::size_t N = x.n(), O = weights.n();
    Tensor out(N, O, 1);
    for (std::size_t n = 0; n < N; ++n) {
        const double* xi = x.data() + n * in_dim;
        for (std::size_t o = 0; o < O; ++o) {
            const double* w = weights.data() + o * in_dim;
            double acc = 0.0;
            for (std::size_t j = 0; j < in_dim; ++j) acc += w[j] * xi[j];
            out(n, o, 0) = acc;
        }
    }
    return out;
}

FcGrads fc_backward(const Tensor& grad_out, const Tensor& cached_input, const Tensor& weights) {
    if (cached_input.empty()) throw UsageError("fc_backward: no cached forward input");
    const std::size_t in_dim = cached_input.c() * cached_input.l();
    if (weights.c() != in_dim || weights.l() != 1) {
        throw ConfigError("fc_backward: weights " + weights.shape_string() +
                          " do not match input " + cached_input.shape_string());
    }
    const std::size_t N = cached_input.n(), O = weights.n();
    if (grad_out.n() != N || grad_out.c() * grad_out.l() != O) {
        throw ConfigError("fc_backward: grad_out " + grad_out.shape_string() + " expected " +
                          dims(N, O, 1));
    }
    FcGrads g{Tensor(N, cached_input.c(), cached_input.l()), Tensor(O, in_dim, 1)};
    for (std::size_t n = 0; n < N; ++n) {
        const double* xi = cached_input.data() + n * in_dim;
        double* gx = g.input.data() + n * in_dim;
        for (std::size_t o = 0; o < O; ++o) {
            const double go = grad_out[n * O + o];
            if (go == 0.0) continue;
            const double* w = weights.data() + o * in_dim;
            double* gw = g.weights.data() + o * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) {
                gx[j] += go * w[j];
                gw[j] += go * xi[j];
            }
        }
    }
    return g;
}

Tensor softmax_forward(const Tensor& h) {
    const std::size_t K = h.c() * h.l();
    Tensor p(h.n(), h.c(), h.l());
    for (std::size_t n = 0; n < h.n(); ++n) {
        const double* in = h.data() + n * K;
        double* out = p.data() + n * K;
        const double mx = *std::max_element(in, in + K);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            out[k] = std::exp(in[k] - mx);
            sum += out[k];
        }
        for (std::size_t k = 0; k < K; ++k) out[k] /= sum;
    }
    return p;
}

Tensor softmax_backward(const Tensor& grad_out, const Tensor& probabilities) {
    if (probabilities.empty()) throw UsageError("softmax_backward: no cached forward output");
    if (!grad_out.same_shape(probabilities)) {
        throw ConfigError("softmax_backward: grad_out " + grad_out.shape_string() +
                          " does not match " + probabilities.shape_string());
    }
    const std::size_t K = probabilities.c() * probabilities.l();
    Tensor g(probabilities.n(), probabilities.c(), probabilities.l());
    for (std::size_t n = 0; n < probabilities.n(); ++n) {
        const double* p = probabilities.data() + n * K;
        const double* go = grad_out.data() + n * K;
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += go[k] * p[k];
        for (std::size_t k = 0; k < K; ++k) g[n * K + k] = p[k] * (go[k] - dot);
    }
    return g;
}

namespace {

double row_l1(const double* v, std::size_t K, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (v[k] < 0.0) {
            throw ContractError("l1_normalize: negative entry " + std::to_string(v[k]) + " at row " +
                                std::to_string(n) + ", column " + std::to_string(k));
        }
        s += v[k];
    }
    return s;
}

}  // namespace

Tensor l1_normalize_forward(const Tensor& v, double floor) {
    const std::size_t K = v.c() * v.l();
    Tensor out(v.n(), v.c(), v.l());
    for (std::size_t n = 0; n < v.n(); ++n) {
        const double* in = v.data() + n * K;
        double* o = out.data() + n * K;
        const double s = row_l1(in, K, n);
        if (s < floor) {
            std::fill(o, o + K, 1.0 / static_cast<double>(K));
        } else {
            for (std::size_t k = 0; k < K; ++k) o[k] = in[k] / s;
        }
    }
    return out;
}

Tensor l1_normalize_backward(const Tensor& grad_out, const Tensor& cached_input, double floor) {
    if (cached_input.empty()) throw UsageError("l1_normalize_backward: no cached forward input");
    if (!grad_out.same_shape(cached_input)) {
        throw ConfigError("l1_normalize_backward: grad_out " + grad_out.shape_string() +
                          " does not match " + cached_input.shape_string());
    }
    const std::size_t K = cached_input.c() * cached_input.l();
    Tensor g(cached_input.n(), cached_input.c(), cached_input.l());
    for (std::size_t n = 0; n < cached_input.n(); ++n) {
        const double* v = cached_input.data() + n * K;
        const double* go = grad_out.data() + n * K;
        const double s = row_l1(v, K, n);
        if (s < floor) continue;  // uniform fallback is constant
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += go[k] * v[k];
        for (std::size_t k = 0; k < K; ++k) g[n * K + k] = go[k] / s - dot / (s * s);
    }
    return g;
}

}  // namespace dscn::nn
