#include "dscn/model.hpp"

#include "dscn/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dscn {

const char* to_string(Fusion f) noexcept {
    return f == Fusion::Sparse ? "DSCN-S" : "DSCN-P";
}

namespace {

// Stride-1 "same" padding.
nn::ConvGeometry same_geometry(std::size_t kernel_width) {
    return nn::ConvGeometry{1, (kernel_width - 1) / 2};
}

void check_block(const BlockShape& b, const char* name) {
    if (b.filters == 0 || b.kernel_width == 0) {
        throw ConfigError(std::string("model config: ") + name + " needs positive filters and kernel width");
    }
}

}  // namespace

std::string ModelShapes::describe() const {
    return "conv1 " + std::to_string(conv1) + " -> pool1 " + std::to_string(pool1) + " -> conv2 " +
           std::to_string(conv2) + " -> pool2 " + std::to_string(pool2) + " -> conv3 " +
           std::to_string(conv3) + " -> flattened " + std::to_string(flattened);
}

ModelShapes model_shapes(const ModelConfig& cfg) {
    if (cfg.bands == 0 || cfg.endmembers == 0) throw ConfigError("model config: bands and K must be positive");
    check_block(cfg.block1, "block1");
    check_block(cfg.block2, "block2");
    check_block(cfg.block3, "block3");
    if (!(cfg.norm_epsilon > 0.0)) throw ConfigError("model config: norm epsilon must be positive");

    ModelShapes s;
    s.conv1 = nn::conv1d_output_length(cfg.bands, cfg.block1.kernel_width, same_geometry(cfg.block1.kernel_width));
    s.pool1 = nn::maxpool1d_output_length(s.conv1, cfg.pool_window, cfg.pool_stride);
    s.conv2 = nn::conv1d_output_length(s.pool1, cfg.block2.kernel_width, same_geometry(cfg.block2.kernel_width));
    s.pool2 = nn::maxpool1d_output_length(s.conv2, cfg.pool_window, cfg.pool_stride);
    s.conv3 = nn::conv1d_output_length(s.pool2, cfg.block3.kernel_width, same_geometry(cfg.block3.kernel_width));
    s.flattened = cfg.block3.filters * s.conv3;
    if (s.flattened < cfg.endmembers) {
        throw ConfigError("model config: flattened dim " + std::to_string(s.flattened) + " < K = " +
                          std::to_string(cfg.endmembers) + " (" + s.describe() + ")");
    }
    return s;
}

std::vector<ParamView> ModelParams::trainable() {
    std::vector<ParamView> v{
        {"conv1.kernel", conv1.values()}, {"sn1.gamma", sn1.gamma}, {"sn1.beta", sn1.beta},
        {"conv2.kernel", conv2.values()}, {"sn2.gamma", sn2.gamma}, {"sn2.beta", sn2.beta},
        {"conv3.kernel", conv3.values()}, {"bn3.gamma", bn3.gamma}, {"bn3.beta", bn3.beta},
        {"fc.weight", fc.values()},
    };
    if (config.fusion == Fusion::Sparse) {
        v.push_back({"head_bn.gamma", head_bn.gamma});
        v.push_back({"head_bn.beta", head_bn.beta});
    }
    return v;
}

std::vector<ConstParamView> ModelParams::trainable() const {
    auto mutable_views = const_cast<ModelParams*>(this)->trainable();
    std::vector<ConstParamView> v;
    v.reserve(mutable_views.size());
    for (auto& m : mutable_views) v.push_back({std::move(m.name), m.values});
    return v;
}

ModelParams build_model(const ModelConfig& cfg, const EndmemberMatrix& endmembers) {
    const ModelShapes shapes = model_shapes(cfg);
    if (endmembers.bands != cfg.bands || endmembers.count != cfg.endmembers) {
        throw ConfigError("build_model: endmember matrix is " + std::to_string(endmembers.bands) + "x" +
                          std::to_string(endmembers.count) + " but config expects " +
                          std::to_string(cfg.bands) + "x" + std::to_string(cfg.endmembers));
    }
    endmembers.validate();

    std::mt19937_64 rng(cfg.seed);
    auto init = [&rng](Tensor& t, std::size_t fan_in) {
        const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& v : t.values()) v = dist(rng);
    };

    ModelParams p;
    p.config = cfg;
    p.conv1 = Tensor(cfg.block1.filters, 1, cfg.block1.kernel_width);
    p.conv2 = Tensor(cfg.block2.filters, cfg.block1.filters, cfg.block2.kernel_width);
    p.conv3 = Tensor(cfg.block3.filters, cfg.block2.filters, cfg.block3.kernel_width);
    p.fc = Tensor(cfg.endmembers, shapes.flattened, 1);
    init(p.conv1, cfg.block1.kernel_width);
    init(p.conv2, cfg.block1.filters * cfg.block2.kernel_width);
    init(p.conv3, cfg.block2.filters * cfg.block3.kernel_width);
    init(p.fc, shapes.flattened);

    p.sn1 = nn::NormAffine::identity(cfg.block1.filters, cfg.spectral_norm_mode, cfg.norm_epsilon);
    p.sn2 = nn::NormAffine::identity(cfg.block2.filters, cfg.spectral_norm_mode, cfg.norm_epsilon);
    p.bn3 = nn::NormAffine::identity(cfg.block3.filters, nn::MomentAxes::BatchAndSpectralPerChannel,
                                     cfg.norm_epsilon);
    p.bn3_stats = nn::RunningStats::empty(cfg.block3.filters, cfg.bn_momentum);
    if (cfg.fusion == Fusion::Sparse) {
        p.head_bn = nn::NormAffine::identity(cfg.endmembers, nn::MomentAxes::BatchAndSpectralPerChannel,
                                             cfg.norm_epsilon);
        p.head_stats = nn::RunningStats::empty(cfg.endmembers, cfg.bn_momentum);
    }
    p.endmembers = endmembers;
    return p;
}

EncoderOutput encoder_forward(const Tensor& x, const ModelParams& p, Mode mode) {
    const ModelConfig& cfg = p.config;
    if (x.empty() || x.c() != 1 || x.l() != cfg.bands) {
        throw InputError("encoder_forward: expected input (N, 1, " + std::to_string(cfg.bands) +
                         "), got " + x.shape_string());
    }
    const bool training = mode == Mode::Training;

    EncoderOutput out;
    EncoderCache& c = out.cache;
    c.mode = mode;
    c.input = x;

    c.conv1_out = nn::conv1d_forward(x, p.conv1, same_geometry(cfg.block1.kernel_width));
    c.sn1_out = nn::spectral_norm_forward(c.conv1_out, p.sn1, &c.sn1);
    c.pool1 = nn::maxpool1d_forward(nn::relu_forward(c.sn1_out), cfg.pool_window, cfg.pool_stride);

    c.conv2_out = nn::conv1d_forward(c.pool1.output, p.conv2, same_geometry(cfg.block2.kernel_width));
    c.sn2_out = nn::spectral_norm_forward(c.conv2_out, p.sn2, &c.sn2);
    c.pool2 = nn::maxpool1d_forward(nn::relu_forward(c.sn2_out), cfg.pool_window, cfg.pool_stride);

    c.conv3_out = nn::conv1d_forward(c.pool2.output, p.conv3, same_geometry(cfg.block3.kernel_width));
    c.bn3_out = nn::batch_norm_forward(c.conv3_out, p.bn3, p.bn3_stats, training, &c.bn3);
    c.flat = nn::relu_forward(c.bn3_out);

    c.logits = nn::fc_forward(c.flat, p.fc);
    if (cfg.fusion == Fusion::Sparse) {
        c.head_bn_out = nn::batch_norm_forward(c.logits, p.head_bn, p.head_stats, training, &c.head_bn);
        c.head_relu = nn::relu_forward(c.head_bn_out);
        out.abundances = nn::l1_normalize_forward(c.head_relu);
        out.pre_normalized = c.head_relu;
    } else {
        out.abundances = nn::softmax_forward(c.logits);
        out.pre_normalized = out.abundances;
    }
    return out;
}

std::vector<NamedGradient> encoder_backward(const EncoderCache& c, const ModelParams& p,
                                            const Tensor& grad_abundances, const Tensor& grad_pre) {
    if (c.input.empty()) throw UsageError("encoder_backward: no cached forward pass");
    const ModelConfig& cfg = p.config;

    Tensor g_logits;
    nn::NormGrads head{};
    if (cfg.fusion == Fusion::Sparse) {
        Tensor g = nn::l1_normalize_backward(grad_abundances, c.head_relu);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_pre[i];
        g = nn::relu_backward(g, c.head_bn_out);
        head = nn::norm_backward(g, c.head_bn, p.head_bn);
        g_logits = std::move(head.input);
    } else {
        Tensor g = grad_abundances;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad_pre[i];
        g_logits = nn::softmax_backward(g, nn::softmax_forward(c.logits));
    }

    nn::FcGrads fc = nn::fc_backward(g_logits, c.flat, p.fc);
    Tensor g = nn::relu_backward(fc.input, c.bn3_out);
    nn::NormGrads bn3 = nn::norm_backward(g, c.bn3, p.bn3);
    nn::ConvGrads conv3 = nn::conv1d_backward(bn3.input, c.pool2.output, p.conv3,
                                              same_geometry(cfg.block3.kernel_width));

    g = nn::relu_backward(nn::maxpool1d_backward(conv3.input, c.pool2), c.sn2_out);
    nn::NormGrads sn2 = nn::norm_backward(g, c.sn2, p.sn2);
    nn::ConvGrads conv2 = nn::conv1d_backward(sn2.input, c.pool1.output, p.conv2,
                                              same_geometry(cfg.block2.kernel_width));

    g = nn::relu_backward(nn::maxpool1d_backward(conv2.input, c.pool1), c.sn1_out);
    nn::NormGrads sn1 = nn::norm_backward(g, c.sn1, p.sn1);
    nn::ConvGrads conv1 = nn::conv1d_backward(sn1.input, c.input, p.conv1,
                                              same_geometry(cfg.block1.kernel_width));

    auto values = [](const Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); };
    std::vector<NamedGradient> out{
        {"conv1.kernel", values(conv1.kernel)}, {"sn1.gamma", sn1.gamma}, {"sn1.beta", sn1.beta},
        {"conv2.kernel", values(conv2.kernel)}, {"sn2.gamma", sn2.gamma}, {"sn2.beta", sn2.beta},
        {"conv3.kernel", values(conv3.kernel)}, {"bn3.gamma", bn3.gamma}, {"bn3.beta", bn3.beta},
        {"fc.weight", values(fc.weights)},
    };
    if (cfg.fusion == Fusion::Sparse) {
        out.push_back({"head_bn.gamma", head.gamma});
        out.push_back({"head_bn.beta", head.beta});
    }
    return out;
}

Tensor decoder_forward(const Tensor& abundances, const EndmemberMatrix& endmembers, double tol) {
    const std::size_t K = abundances.c() * abundances.l();
    if (K != endmembers.count) {
        throw InputError("decoder_forward: " + std::to_string(K) + " abundances per pixel for " +
                         std::to_string(endmembers.count) + " endmembers");
    }
    const std::size_t N = abundances.n(), B = endmembers.bands;
    Tensor x_hat(N, 1, B);
    for (std::size_t n = 0; n < N; ++n) {
        std::span<const double> y(abundances.data() + n * K, K);
        const double violation = simplex_violation(y);
        if (!(violation <= tol)) {
            throw ContractError("decoder_forward: abundance row " + std::to_string(n) +
                                " is off the simplex by " + std::to_string(violation));
        }
        double* out = &x_hat(n, 0, 0);
        for (std::size_t k = 0; k < K; ++k) {
            if (y[k] == 0.0) continue;
            const auto col = endmembers.column(k);
            for (std::size_t b = 0; b < B; ++b) out[b] += col[b] * y[k];
        }
    }
    return x_hat;
}

Tensor decoder_backward(const Tensor& grad_out, const EndmemberMatrix& endmembers) {
    const std::size_t N = grad_out.n(), B = endmembers.bands, K = endmembers.count;
    if (grad_out.c() * grad_out.l() != B) throw InputError("decoder_backward: band count mismatch");
    Tensor g(N, K, 1);
    for (std::size_t n = 0; n < N; ++n) {
        const double* go = grad_out.data() + n * B;
        for (std::size_t k = 0; k < K; ++k) {
            const auto col = endmembers.column(k);
            double acc = 0.0;
            for (std::size_t b = 0; b < B; ++b) acc += col[b] * go[b];
            g(n, k, 0) = acc;
        }
    }
    return g;
}

namespace {

std::vector<std::span<const double>> decay_spans(const ModelParams& p) {
    std::vector<std::span<const double>> spans;
    for (const auto& v : p.trainable()) spans.push_back(v.values);
    return spans;
}

}  // namespace

LossBreakdown model_loss(const Tensor& x, const ModelParams& p, const LossWeights& w) {
    const EncoderOutput enc = encoder_forward(x, p, Mode::Training);
    const Tensor x_hat = decoder_forward(enc.abundances, p.endmembers);
    return loss_total(x, x_hat, enc.pre_normalized, decay_spans(p), w);
}

GradientResult model_gradients(const Tensor& x, const ModelParams& p, const LossWeights& w) {
    if (x.n() == 0) throw InputError("model_gradients: empty batch");
    const EncoderOutput enc = encoder_forward(x, p, Mode::Training);
    const Tensor x_hat = decoder_forward(enc.abundances, p.endmembers);

    GradientResult r;
    r.loss = loss_total(x, x_hat, enc.pre_normalized, decay_spans(p), w);

    const Tensor g_y = decoder_backward(recon_gradient(x, x_hat, w.lambda1), p.endmembers);
    const Tensor g_pre = sparsity_gradient(enc.pre_normalized, w.lambda2);
    r.gradients = encoder_backward(enc.cache, p, g_y, g_pre);

    const auto params = p.trainable();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& g = r.gradients[i].values;
        const auto theta = params[i].values;
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += 2.0 * w.lambda3 * theta[j];
        for (double v : g) {
            if (!std::isfinite(v)) {
                throw NumericalError("model_gradients: non-finite gradient in " + r.gradients[i].name,
                                     r.gradients[i].name);
            }
        }
    }
    r.gradients.push_back({"endmembers", std::vector<double>(p.endmembers.values.size(), 0.0), true});

    r.bn3_moments = enc.cache.bn3.moments;
    if (p.config.fusion == Fusion::Sparse) r.head_moments = enc.cache.head_bn.moments;
    return r;
}

AbundanceMap unmix_cube(const ModelParams& p, const HyperCube& cube, std::size_t chunk) {
    if (cube.pixel_count() == 0) throw InputError("unmix_cube: empty cube");
    if (cube.bands != p.config.bands) {
        throw InputError("unmix_cube: cube has " + std::to_string(cube.bands) + " bands, model expects " +
                         std::to_string(p.config.bands));
    }
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t K = p.config.endmembers;
    AbundanceMap map(cube.width, cube.height, K);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < cube.pixel_count(); start += chunk) {
        const std::size_t stop = std::min(cube.pixel_count(), start + chunk);
        idx.resize(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const EncoderOutput enc = encoder_forward(gather_pixels(cube, idx), p, Mode::Inference);
        std::copy(enc.abundances.values().begin(), enc.abundances.values().end(),
                  map.data.begin() + static_cast<std::ptrdiff_t>(start * K));
    }
    return map;
}

}  // namespace dscn
