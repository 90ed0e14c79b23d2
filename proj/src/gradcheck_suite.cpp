#include "dscn/harness.hpp"

#include "dscn/nn.hpp"

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>

namespace dscn::harness {

namespace {

class FixtureRng {
public:
    explicit FixtureRng(std::uint64_t seed) : rng_(seed) {}

    Tensor uniform(std::size_t n, std::size_t c, std::size_t l, double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        Tensor t(n, c, l);
        for (double& v : t.values()) v = d(rng_);
        return t;
    }

    // Entries bounded away from zero by `margin`.
    Tensor away_from_zero(std::size_t n, std::size_t c, std::size_t l, double margin) {
        Tensor t = uniform(n, c, l, -1.0, 1.0);
        for (double& v : t.values()) v = v < 0.0 ? v - margin : v + margin;
        return t;
    }

    // Distinct entries, pairwise gaps >= `gap`, in shuffled order.
    Tensor distinct(std::size_t n, std::size_t c, std::size_t l, double gap) {
        Tensor t(n, c, l);
        std::vector<double> levels(t.size());
        for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = static_cast<double>(i) * gap - 0.5;
        std::shuffle(levels.begin(), levels.end(), rng_);
        std::copy(levels.begin(), levels.end(), t.values().begin());
        return t;
    }

    std::vector<double> vec(std::size_t n, double lo, double hi) {
        const Tensor t = uniform(1, 1, n, lo, hi);
        return {t.values().begin(), t.values().end()};
    }

    std::uint64_t next() { return rng_(); }

private:
    std::mt19937_64 rng_;
};

Tensor with_values(const Tensor& like, std::span<const double> v) {
    Tensor t(like.n(), like.c(), like.l());
    std::copy(v.begin(), v.end(), t.values().begin());
    return t;
}

double project(const Tensor& out, const Tensor& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
    return s;
}

class Suite {
public:
    Suite(const GradcheckSuiteOptions& opts) : opts_(opts), rng_(opts.seed) {}

    void check(const std::string& layer, const std::string& key, const std::string& target,
               const ScalarObjective& f, std::span<const double> theta, std::vector<double> analytic) {
        if (opts_.inject_fault && *opts_.inject_fault == key) {
            for (double& a : analytic) a = 1.5 * a + 0.01;
        }
        GradCheckOptions gc;
        gc.h = opts_.h;
        gc.tol = opts_.tol;
        gc.seed = rng_.next();
        result_.entries.push_back({layer, target, grad_check(f, theta, analytic, gc)});
        result_.passed = result_.passed && result_.entries.back().report.passed;
    }

    static std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

    void conv(nn::ConvGeometry g, const std::string& label) {
        const Tensor x = rng_.uniform(3, 2, 9, -1, 1);
        const Tensor k = rng_.uniform(3, 2, 3, -1, 1);
        const Tensor probe = rng_.uniform(3, 3, nn::conv1d_output_length(9, 3, g), -1, 1);
        const auto grads = nn::conv1d_backward(probe, x, k, g);
        check(label, "conv", "input",
              [&](std::span<const double> v) { return project(nn::conv1d_forward(with_values(x, v), k, g), probe); },
              x.values(), flat(grads.input));
        check(label, "conv", "kernel",
              [&](std::span<const double> v) { return project(nn::conv1d_forward(x, with_values(k, v), g), probe); },
              k.values(), flat(grads.kernel));
    }

    void maxpool(std::size_t window, std::size_t stride) {
        const Tensor x = rng_.distinct(2, 3, 12, 20.0 * opts_.h);
        const auto fwd = nn::maxpool1d_forward(x, window, stride);
        const Tensor probe = rng_.uniform(2, 3, fwd.output.l(), -1, 1);
        const Tensor gx = nn::maxpool1d_backward(probe, fwd);
        check("maxpool[w=" + std::to_string(window) + ",s=" + std::to_string(stride) + "]", "maxpool", "input",
              [&](std::span<const double> v) {
                  return project(nn::maxpool1d_forward(with_values(x, v), window, stride).output, probe);
              },
              x.values(), flat(gx));
    }

    void relu() {
        const Tensor x = rng_.away_from_zero(4, 3, 8, 10.0 * opts_.h);
        const Tensor probe = rng_.uniform(4, 3, 8, -1, 1);
        check("relu", "relu", "input",
              [&](std::span<const double> v) { return project(nn::relu_forward(with_values(x, v)), probe); },
              x.values(), flat(nn::relu_backward(probe, x)));
    }

    template <class Forward>
    void norm(const std::string& label, const std::string& key, const Tensor& x, nn::NormAffine a, Forward forward) {
        const Tensor probe = rng_.uniform(x.n(), x.c(), x.l(), -1, 1);
        nn::NormCache cache;
        forward(x, a, &cache);
        const auto g = nn::norm_backward(probe, cache, a);
        check(label, key, "input",
              [&](std::span<const double> v) { return project(forward(with_values(x, v), a, nullptr), probe); },
              x.values(), flat(g.input));
        check(label, key, "gamma",
              [&](std::span<const double> v) {
                  nn::NormAffine b = a;
                  b.gamma.assign(v.begin(), v.end());
                  return project(forward(x, b, nullptr), probe);
              },
              a.gamma, g.gamma);
        check(label, key, "beta",
              [&](std::span<const double> v) {
                  nn::NormAffine b = a;
                  b.beta.assign(v.begin(), v.end());
                  return project(forward(x, b, nullptr), probe);
              },
              a.beta, g.beta);
    }

    nn::NormAffine random_affine(std::size_t channels, nn::MomentAxes axes) {
        nn::NormAffine a = nn::NormAffine::identity(channels, axes);
        a.gamma = rng_.vec(channels, 0.5, 1.5);
        a.beta = rng_.vec(channels, -0.5, 0.5);
        return a;
    }

    void norms() {
        {
            const Tensor x = rng_.uniform(3, 4, 8, -2, 2);
            norm("spectral_norm[per-sample]", "spectral_norm", x,
                 random_affine(4, nn::MomentAxes::SpectralPerSample),
                 [](const Tensor& t, const nn::NormAffine& a, nn::NormCache* c) {
                     return nn::spectral_norm_forward(t, a, c);
                 });
        }
        {
            const Tensor x = rng_.uniform(3, 2, 8, -2, 2);
            norm("spectral_norm[pooled]", "spectral_norm", x, random_affine(2, nn::MomentAxes::SpectralAndBatch),
                 [](const Tensor& t, const nn::NormAffine& a, nn::NormCache* c) {
                     return nn::spectral_norm_forward(t, a, c);
                 });
        }
        {
            const Tensor x = rng_.uniform(4, 3, 5, -2, 2);
            const nn::RunningStats none = nn::RunningStats::empty(3);
            norm("batch_norm[training]", "batch_norm", x,
                 random_affine(3, nn::MomentAxes::BatchAndSpectralPerChannel),
                 [&none](const Tensor& t, const nn::NormAffine& a, nn::NormCache* c) {
                     return nn::batch_norm_forward(t, a, none, true, c);
                 });
        }
        {
            const Tensor x = rng_.uniform(4, 3, 5, -2, 2);
            nn::RunningStats running = nn::RunningStats::empty(3);
            running.update({rng_.vec(3, -0.5, 0.5), rng_.vec(3, 0.5, 2.0)});
            norm("batch_norm[inference]", "batch_norm", x,
                 random_affine(3, nn::MomentAxes::BatchAndSpectralPerChannel),
                 [&running](const Tensor& t, const nn::NormAffine& a, nn::NormCache* c) {
                     return nn::batch_norm_forward(t, a, running, false, c);
                 });
        }
    }

    void fc() {
        const Tensor x = rng_.uniform(4, 5, 1, -1, 1);
        const Tensor w = rng_.uniform(3, 5, 1, -1, 1);
        const Tensor probe = rng_.uniform(4, 3, 1, -1, 1);
        const auto g = nn::fc_backward(probe, x, w);
        check("fc", "fc", "input",
              [&](std::span<const double> v) { return project(nn::fc_forward(with_values(x, v), w), probe); },
              x.values(), flat(g.input));
        check("fc", "fc", "weights",
              [&](std::span<const double> v) { return project(nn::fc_forward(x, with_values(w, v)), probe); },
              w.values(), flat(g.weights));
    }

    void softmax() {
        const Tensor h = rng_.uniform(4, 5, 1, -3, 3);
        const Tensor probe = rng_.uniform(4, 5, 1, -1, 1);
        check("softmax", "softmax", "input",
              [&](std::span<const double> v) { return project(nn::softmax_forward(with_values(h, v)), probe); },
              h.values(), flat(nn::softmax_backward(probe, nn::softmax_forward(h))));
    }

    void l1_normalize() {
        const Tensor v0 = rng_.uniform(4, 3, 1, 0.1, 1.0);
        const Tensor probe = rng_.uniform(4, 3, 1, -1, 1);
        check("l1_normalize", "l1_normalize", "input",
              [&](std::span<const double> v) { return project(nn::l1_normalize_forward(with_values(v0, v)), probe); },
              v0.values(), flat(nn::l1_normalize_backward(probe, v0)));
    }

    void model(Fusion fusion) {
        SceneSpec spec;
        spec.endmembers = 3;
        spec.bands = 16;
        spec.width = 2;
        spec.height = 2;
        spec.snr_db = 30.0;
        spec.seed = opts_.seed + 11;
        const Scene scene = synth_scene(spec);
        std::vector<std::size_t> idx{0, 1, 2, 3};
        const Tensor x = gather_pixels(scene.cube, idx);

        ModelConfig cfg;
        cfg.bands = 16;
        cfg.endmembers = 3;
        cfg.block1 = {4, 3};
        cfg.block2 = {4, 3};
        cfg.block3 = {2, 3};
        cfg.fusion = fusion;
        cfg.seed = opts_.seed + 13;
        ModelParams p = build_model(cfg, scene.endmembers);
        for (auto& view : p.trainable()) {
            if (view.name.ends_with(".gamma")) {
                for (double& g : view.values) g = 1.0 + 0.2 * (g - 1.0 + rng_.vec(1, -1, 1)[0]);
            } else if (view.name.ends_with(".beta")) {
                for (double& b : view.values) b = 0.1 * rng_.vec(1, -1, 1)[0];
            }
        }
        const LossWeights w;

        std::vector<double> theta;
        for (const auto& view : p.trainable()) theta.insert(theta.end(), view.values.begin(), view.values.end());
        std::vector<double> analytic;
        for (const auto& g : model_gradients(x, p, w).gradients) {
            if (!g.frozen) analytic.insert(analytic.end(), g.values.begin(), g.values.end());
        }
        const auto loss = [&](std::span<const double> v) {
            ModelParams q = p;
            std::size_t offset = 0;
            for (auto& view : q.trainable()) {
                std::copy(v.begin() + offset, v.begin() + offset + view.values.size(), view.values.begin());
                offset += view.values.size();
            }
            return model_loss(x, q, w).total;
        };
        check(std::string("model[") + to_string(fusion) + "]", "model", "all trainable", loss, theta, analytic);
    }

    GradcheckSuiteResult run() {
        const auto start = std::chrono::steady_clock::now();
        conv({1, 1}, "conv[s=1,p=1]");
        conv({2, 0}, "conv[s=2,p=0]");
        maxpool(2, 2);
        maxpool(3, 2);
        relu();
        norms();
        fc();
        softmax();
        l1_normalize();
        model(Fusion::Sparse);
        model(Fusion::Probabilistic);
        result_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return result_;
    }

private:
    GradcheckSuiteOptions opts_;
    FixtureRng rng_;
    GradcheckSuiteResult result_;
};

}  // namespace

GradcheckSuiteResult run_gradcheck_suite(const GradcheckSuiteOptions& opts) {
    return Suite(opts).run();
}

std::string format_gradcheck_report(const GradcheckSuiteResult& r, const GradcheckSuiteOptions& opts) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "gradcheck: h=%g tol=%g seed=%llu\n", opts.h, opts.tol,
                  static_cast<unsigned long long>(opts.seed));
    out << line;
    for (const auto& e : r.entries) {
        std::snprintf(line, sizeof line, "%-4s %-28s %-14s max_rel_err=%.3e coords=%zu", e.report.passed ? "PASS" : "FAIL",
                      e.layer.c_str(), e.target.c_str(), e.report.max_rel_error, e.report.checked);
        out << line;
        if (!e.report.passed) {
            std::snprintf(line, sizeof line, "  worst coord %zu: analytic=%.10g numeric=%.10g", e.report.worst_index,
                          e.report.analytic_at_worst, e.report.numeric_at_worst);
            out << line;
        }
        out << '\n';
    }
    std::snprintf(line, sizeof line, "%s (%zu checks, %.2f s)\n", r.passed ? "all gradients match" : "GRADIENT CHECK FAILED",
                  r.entries.size(), r.seconds);
    out << line;
    return out.str();
}

}  // namespace dscn::harness
