#include "dscn/error.hpp"
#include "dscn/gradcheck.hpp"
#include "dscn/model.hpp"
#include "dscn/scene.hpp"
#include "helpers.hpp"

#include <cmath>

using namespace dscn;
using test_support::random_tensor;

namespace {

EndmemberMatrix random_endmembers(std::mt19937_64& rng, std::size_t bands, std::size_t k) {
    EndmemberMatrix e(bands, k);
    std::uniform_real_distribution<double> d(0.05, 1.0);
    for (double& v : e.values) v = d(rng);
    return e;
}

ModelConfig small_config(Fusion fusion, std::size_t bands = 16, std::size_t k = 3) {
    ModelConfig cfg;
    cfg.bands = bands;
    cfg.endmembers = k;
    cfg.block1 = {4, 3};
    cfg.block2 = {4, 3};
    cfg.block3 = {2, 3};
    cfg.fusion = fusion;
    cfg.seed = 5;
    return cfg;
}

void randomize(ModelParams& p, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> d(-scale, scale);
    for (auto& view : p.trainable())
        for (double& v : view.values) v += d(rng);
}

// Training-mode pass once so the batch norms have running statistics.
void seed_running_stats(ModelParams& p, const Tensor& x) {
    const auto r = model_gradients(x, p, {});
    p.bn3_stats.update(r.bn3_moments);
    if (p.config.fusion == Fusion::Sparse) p.head_stats.update(r.head_moments);
}

}  // namespace

TEST_SUITE("dscn-model") {

TEST_CASE("build_model is deterministic in the seed") {
    std::mt19937_64 rng(1);
    const auto e = random_endmembers(rng, 64, 3);
    ModelConfig cfg;
    cfg.bands = 64;
    cfg.endmembers = 3;
    cfg.seed = 9;
    CHECK(build_model(cfg, e) == build_model(cfg, e));
    cfg.seed = 10;
    const auto other = build_model(cfg, e);
    cfg.seed = 9;
    CHECK_FALSE(other == build_model(cfg, e));
}

TEST_CASE("default architecture shapes") {
    ModelConfig cfg;
    cfg.bands = 198;
    cfg.endmembers = 4;
    const auto s = model_shapes(cfg);
    CHECK(s.conv1 == 198);
    CHECK(s.pool1 == 99);
    CHECK(s.conv2 == 99);
    CHECK(s.pool2 == 49);
    CHECK(s.conv3 == 49);
    CHECK(s.flattened == 8 * 49);
    CHECK_FALSE(s.describe().empty());

    std::mt19937_64 rng(2);
    const auto p = build_model(cfg, random_endmembers(rng, 198, 4));
    CHECK(p.fc.n() == 4);
    CHECK(p.fc.c() == 8 * 49);
}

TEST_CASE("invalid configurations") {
    ModelConfig cfg;
    cfg.bands = 3;
    cfg.endmembers = 3;
    CHECK_THROWS_AS(model_shapes(cfg), ConfigError);  // pooling window exceeds the stage length

    cfg.bands = 16;
    cfg.endmembers = 200;
    CHECK_THROWS_AS(model_shapes(cfg), ConfigError);  // flattened < K

    std::mt19937_64 rng(3);
    cfg.endmembers = 3;
    CHECK_THROWS_AS(build_model(cfg, random_endmembers(rng, 17, 3)), ConfigError);
}

TEST_CASE("encoder outputs lie on the simplex (property)") {
    std::mt19937_64 rng(4);
    for (Fusion fusion : {Fusion::Sparse, Fusion::Probabilistic}) {
        CAPTURE(to_string(fusion));
        for (int trial = 0; trial < 20; ++trial) {
            ModelConfig cfg = small_config(fusion);
            cfg.seed = trial;
            ModelParams p = build_model(cfg, random_endmembers(rng, 16, 3));
            randomize(p, rng, 0.5);
            const Tensor x = random_tensor(rng, 8, 1, 16, 0.0, 2.0);
            seed_running_stats(p, x);
            for (Mode mode : {Mode::Training, Mode::Inference}) {
                const Tensor y = encoder_forward(random_tensor(rng, 8, 1, 16, 0.0, 2.0), p, mode).abundances;
                for (std::size_t n = 0; n < y.n(); ++n) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < 3; ++k) {
                        CHECK(y(n, k, 0) >= 0.0);
                        s += y(n, k, 0);
                    }
                    CHECK(std::abs(s - 1.0) <= 1e-6);
                }
            }
        }
    }
}

TEST_CASE("probabilistic head with zero dense weights is uniform") {
    std::mt19937_64 rng(5);
    ModelParams p = build_model(small_config(Fusion::Probabilistic, 16, 4), random_endmembers(rng, 16, 4));
    for (double& w : p.fc.values()) w = 0.0;
    const Tensor y = encoder_forward(random_tensor(rng, 3, 1, 16, 0, 1), p, Mode::Training).abundances;
    for (double v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("encoder input validation") {
    std::mt19937_64 rng(6);
    ModelParams p = build_model(small_config(Fusion::Probabilistic), random_endmembers(rng, 16, 3));
    CHECK_THROWS_AS(encoder_forward(Tensor(2, 1, 15), p, Mode::Training), InputError);
    CHECK_THROWS_AS(encoder_forward(Tensor(2, 2, 16), p, Mode::Training), InputError);
    CHECK_THROWS_AS(encoder_forward(random_tensor(rng, 2, 1, 16), p, Mode::Inference), UsageError);
}

TEST_CASE("decoder") {
    std::mt19937_64 rng(7);
    const auto e = random_endmembers(rng, 10, 3);
    for (std::size_t k = 0; k < 3; ++k) {
        Tensor y(1, 3, 1);
        y(0, k, 0) = 1.0;
        const Tensor xh = decoder_forward(y, e);
        for (std::size_t b = 0; b < 10; ++b) CHECK(xh(0, 0, b) == e(b, k));
    }

    EndmemberMatrix same(10, 3);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t b = 0; b < 10; ++b) same(b, k) = e(b, 0);
    const Tensor xu = decoder_forward(Tensor(1, 3, 1, 1.0 / 3.0), same);
    for (std::size_t b = 0; b < 10; ++b) CHECK(xu(0, 0, b) == doctest::Approx(e(b, 0)).epsilon(1e-15));

    for (int trial = 0; trial < 20; ++trial) {
        Tensor y = random_tensor(rng, 2, 3, 1, 0, 1);
        for (std::size_t n = 0; n < 2; ++n) {
            const double s = y(n, 0, 0) + y(n, 1, 0) + y(n, 2, 0);
            for (std::size_t k = 0; k < 3; ++k) y(n, k, 0) /= s;
        }
        const Tensor xh = decoder_forward(y, e);
        for (std::size_t n = 0; n < 2; ++n)
            for (std::size_t b = 0; b < 10; ++b) {
                double want = 0.0;
                for (std::size_t k = 0; k < 3; ++k) want += e(b, k) * y(n, k, 0);
                CHECK(xh(n, 0, b) == doctest::Approx(want).epsilon(1e-14));
            }
    }

    Tensor bad(1, 3, 1, 0.5);
    CHECK_THROWS_AS(decoder_forward(bad, e), ContractError);
}

TEST_CASE("model gradients") {
    std::mt19937_64 rng(8);
    for (Fusion fusion : {Fusion::Sparse, Fusion::Probabilistic}) {
        CAPTURE(to_string(fusion));
        SceneSpec spec;
        spec.bands = 16;
        spec.width = 2;
        spec.height = 2;
        spec.snr_db = 30.0;
        spec.seed = 3;
        const Scene scene = synth_scene(spec);
        const std::vector<std::size_t> idx{0, 1, 2, 3};
        const Tensor x = gather_pixels(scene.cube, idx);
        ModelParams p = build_model(small_config(fusion), scene.endmembers);

        SUBCASE("weight decay alone") {
            const LossWeights w{0.0, 0.0, 0.01};
            const auto r = model_gradients(x, p, w);
            const auto views = p.trainable();
            REQUIRE(r.gradients.size() == views.size() + 1);
            for (std::size_t i = 0; i < views.size(); ++i) {
                CHECK(r.gradients[i].name == views[i].name);
                for (std::size_t j = 0; j < views[i].values.size(); ++j)
                    CHECK(r.gradients[i].values[j] == doctest::Approx(2 * 0.01 * views[i].values[j]).epsilon(1e-12));
            }
        }
        SUBCASE("frozen endmembers receive a zero gradient") {
            const auto r = model_gradients(x, p, {});
            const auto& last = r.gradients.back();
            CHECK(last.name == "endmembers");
            CHECK(last.frozen);
            for (double v : last.values) CHECK(v == 0.0);
        }
        SUBCASE("full loss matches finite differences") {
            std::vector<double> theta, analytic;
            for (const auto& v : p.trainable()) theta.insert(theta.end(), v.values.begin(), v.values.end());
            for (const auto& g : model_gradients(x, p, {}).gradients)
                if (!g.frozen) analytic.insert(analytic.end(), g.values.begin(), g.values.end());
            GradCheckOptions o;
            o.full_check_limit = theta.size();
            o.h = 1e-6;  // relu, pooling and |y| kinks sit within 1e-3 of this point
            const auto r = grad_check(
                [&](std::span<const double> v) {
                    ModelParams q = p;
                    std::size_t off = 0;
                    for (auto& view : q.trainable()) {
                        std::copy(v.begin() + off, v.begin() + off + view.values.size(), view.values.begin());
                        off += view.values.size();
                    }
                    return model_loss(x, q, {}).total;
                },
                theta, analytic, o);
            CAPTURE(r.max_rel_error);
            CAPTURE(r.worst_index);
            CAPTURE(r.analytic_at_worst);
            CAPTURE(r.numeric_at_worst);
            CAPTURE(std::string(to_string(fusion)));
            CHECK(r.passed);
        }
        SUBCASE("loss agrees with the gradient pass") {
            const auto a = model_loss(x, p, {});
            const auto b = model_gradients(x, p, {}).loss;
            CHECK(a.total == b.total);
        }
    }
}

TEST_CASE("unmix_cube runs inference over every pixel") {
    SceneSpec spec;
    spec.bands = 16;
    spec.width = 5;
    spec.height = 3;
    spec.seed = 4;
    const Scene scene = synth_scene(spec);
    ModelParams p = build_model(small_config(Fusion::Sparse), scene.endmembers);
    std::vector<std::size_t> idx(15);
    for (std::size_t i = 0; i < 15; ++i) idx[i] = i;
    seed_running_stats(p, gather_pixels(scene.cube, idx));
    const AbundanceMap a = unmix_cube(p, scene.cube, 4);
    CHECK(a.width == 5);
    CHECK(a.height == 3);
    CHECK(a.count == 3);
    const AbundanceMap whole = unmix_cube(p, scene.cube);
    CHECK(a == whole);
    for (std::size_t i = 0; i < 15; ++i) CHECK(simplex_violation(a.pixel(i)) <= 1e-6);
}

}  // TEST_SUITE
