#include "dscn/error.hpp"
#include "dscn/gradcheck.hpp"
#include "dscn/objective.hpp"
#include "helpers.hpp"

#include <cmath>
#include <numbers>

using namespace dscn;
using test_support::from_values;
using test_support::random_tensor;

TEST_SUITE("objective") {

TEST_CASE("spectral angle") {
    const std::vector<double> a{1, 0, 0}, b{0, 1, 0}, c{-1, 0, 0}, d{3, 0, 0};
    CHECK(sad(a, a) == 0.0);
    CHECK(sad(a, d) == 0.0);
    CHECK(sad(a, b) == doctest::Approx(std::numbers::pi / 2));
    CHECK(sad(a, c) == doctest::Approx(std::numbers::pi));
    CHECK_THROWS_AS(sad(a, std::vector<double>{0, 0, 0}), DomainError);
    CHECK_THROWS_AS(sad(a, std::vector<double>{1, 0}), InputError);

    // Scale invariance and symmetry on random spectra.
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        const auto x = random_tensor(rng, 1, 1, 12, 0.01, 1);
        const auto y = random_tensor(rng, 1, 1, 12, 0.01, 1);
        std::vector<double> y2(y.values().begin(), y.values().end());
        for (double& v : y2) v *= 7.5;
        const double s = sad(x.values(), y.values());
        CHECK(s >= 0.0);
        CHECK(s <= std::numbers::pi);
        CHECK(sad(y.values(), x.values()) == doctest::Approx(s).epsilon(1e-12));
        CHECK(sad(x.values(), y2) == doctest::Approx(s).epsilon(1e-10));
    }
}

TEST_CASE("spectral angle gradient") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto x = random_tensor(rng, 1, 1, 10, 0.1, 1);
        const auto xh = random_tensor(rng, 1, 1, 10, 0.1, 1);
        std::vector<double> g(10);
        sad_gradient(x.values(), xh.values(), g);
        const auto r = grad_check([&](std::span<const double> v) { return sad(x.values(), v); }, xh.values(), g,
                                  {.h = 1e-5});
        CHECK(r.passed);
    }
    const std::vector<double> a{1, 2, 3};
    std::vector<double> g(3, 9.0);
    sad_gradient(a, a, g);
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("similarity and KL term") {
    const std::vector<double> a{1, 0}, b{0, 1}, c{-1, 0};
    CHECK(similarity_c(a, a) == 1.0);
    CHECK(similarity_c(a, b) == doctest::Approx(0.5));
    CHECK(similarity_c(a, c) == kSimilarityFloor);
    CHECK(kl_term(1.0) == 0.0);
    CHECK(kl_term(0.5) == doctest::Approx(std::log(2.0)));
    CHECK(kl_term(std::exp(-1.0)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(kl_term(0.0), DomainError);
}

TEST_CASE("loss_total arithmetic") {
    SUBCASE("perfect reconstruction with only the reconstruction weight") {
        std::mt19937_64 rng(3);
        const auto x = random_tensor(rng, 4, 1, 8, 0.1, 1);
        const auto y = random_tensor(rng, 4, 3, 1, 0, 1);
        const auto l = loss_total(x, x, y, {}, {10.0, 0.0, 0.0});
        CHECK(l.total == 0.0);
    }
    SUBCASE("single sample with C = 0.5") {
        const auto x = from_values(1, 1, 2, {1, 0});
        const auto xh = from_values(1, 1, 2, {0, 1});
        const auto y = from_values(1, 2, 1, {0.25, 0.75});
        const std::vector<double> theta{6.0, 8.0};  // squared norm 100
        const auto l = loss_total(x, xh, y, {std::span<const double>(theta)}, {});
        CHECK(l.recon == doctest::Approx(std::log(2.0)));
        CHECK(l.sparsity == doctest::Approx(1.0));
        CHECK(l.decay == doctest::Approx(100.0));
        CHECK(l.total == doctest::Approx(10 * std::log(2.0) + 0.4 + 1e-3));
        CHECK(l.total == doctest::Approx(7.3325).epsilon(1e-4));
    }
    SUBCASE("mismatched batches") {
        CHECK_THROWS_AS(loss_total(Tensor(2, 1, 4, 1.0), Tensor(3, 1, 4, 1.0), Tensor(2, 2, 1), {}, {}), InputError);
    }
    CHECK_THROWS_AS((LossWeights{-1.0, 0.4, 1e-5}.validate()), ConfigError);
}

TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(4);
    const auto x = random_tensor(rng, 3, 1, 6, 0.1, 1);
    const auto xh = random_tensor(rng, 3, 1, 6, 0.1, 1);
    const auto y = random_tensor(rng, 3, 4, 1, 0.05, 1);
    const LossWeights w;
    const Tensor gr = recon_gradient(x, xh, w.lambda1);
    CHECK(grad_check(
              [&](std::span<const double> v) {
                  Tensor t = xh;
                  std::copy(v.begin(), v.end(), t.values().begin());
                  return loss_total(x, t, y, {}, w).total;
              },
              xh.values(), gr.values(), {.h = 1e-5})
              .passed);
    const Tensor gs = sparsity_gradient(y, w.lambda2);
    CHECK(grad_check(
              [&](std::span<const double> v) {
                  Tensor t = y;
                  std::copy(v.begin(), v.end(), t.values().begin());
                  return loss_total(x, xh, t, {}, w).total;
              },
              y.values(), gs.values(), {.h = 1e-5})
              .passed);
}

TEST_CASE("per-material RMSE") {
    AbundanceMap truth(2, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        truth.pixel(i)[0] = 0.3;
        truth.pixel(i)[1] = 0.7;
    }
    const auto zero = rmse_per_material(truth, truth);
    CHECK(zero.average == 0.0);
    for (double v : zero.per_material) CHECK(v == 0.0);

    AbundanceMap est = truth;
    for (std::size_t i = 0; i < 4; ++i) est.pixel(i)[0] += 0.1;
    const auto r = rmse_per_material(est, truth);
    CHECK(r.per_material[0] == doctest::Approx(0.1));
    CHECK(r.per_material[1] == 0.0);
    CHECK(r.average == doctest::Approx(0.05));
    CHECK(r.scaled(100.0).per_material[0] == doctest::Approx(10.0));

    CHECK_THROWS_AS(rmse_per_material(AbundanceMap(2, 1, 2), truth), InputError);
}

}  // TEST_SUITE
