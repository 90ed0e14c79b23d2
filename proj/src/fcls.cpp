#include "dscn/fcls.hpp"

#include "dscn/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <string>

namespace dscn {

std::vector<double> simplex_project(std::span<const double> v) {
    const std::size_t K = v.size();
    if (K == 0) return {};
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, tau = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
        cumsum += u[j];
        const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0.0) tau = t;
    }
    std::vector<double> y(K);
    for (std::size_t k = 0; k < K; ++k) y[k] = std::max(v[k] - tau, 0.0);
    return y;
}

namespace {

// Normal equations of ||x - E y||^2 = y'Gy - 2c'y + x'x.
struct Quadratic {
    Eigen::MatrixXd gram;
    Eigen::VectorXd cross;
    double xx = 0.0;

    double value(const Eigen::VectorXd& y) const { return y.dot(gram * y) - 2.0 * cross.dot(y) + xx; }
    Eigen::VectorXd gradient(const Eigen::VectorXd& y) const { return 2.0 * (gram * y - cross); }
};

Eigen::MatrixXd gram_matrix(const EndmemberMatrix& E) {
    const Eigen::Map<const Eigen::MatrixXd> M(E.values.data(), static_cast<Eigen::Index>(E.bands),
                                              static_cast<Eigen::Index>(E.count));
    return M.transpose() * M;
}

Eigen::VectorXd project(const Eigen::VectorXd& v) {
    const auto y = simplex_project(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    return Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
}

FclsResult solve_with(const Quadratic& q, double lipschitz, const FclsConfig& cfg) {
    const auto K = q.gram.rows();
    Eigen::VectorXd y = Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
    FclsResult r;
    double f = q.value(y);
    if (cfg.record_objective) r.objective.push_back(f);

    double step = 1.0 / lipschitz;
    for (r.iterations = 0; r.iterations < cfg.max_iters;) {
        const Eigen::VectorXd g = q.gradient(y);
        Eigen::VectorXd next = project(y - step * g);
        double f_next = q.value(next);
        if (cfg.step_rule == StepRule::Backtracking) {
            step *= 2.0;
            for (;;) {
                next = project(y - step * g);
                f_next = q.value(next);
                const Eigen::VectorXd d = next - y;
                if (f_next <= f + g.dot(d) + d.squaredNorm() / (2.0 * step) || step < 1e-12 / lipschitz) break;
                step *= 0.5;
            }
        }
        const double mapping_norm = (y - next).norm() / step;
        y = std::move(next);
        f = f_next;
        ++r.iterations;
        if (cfg.record_objective) r.objective.push_back(f);
        if (mapping_norm < cfg.tol) {
            r.converged = true;
            break;
        }
    }
    r.abundances.assign(y.data(), y.data() + y.size());
    return r;
}

Quadratic make_quadratic(std::span<const double> x, const EndmemberMatrix& E, Eigen::MatrixXd gram) {
    if (x.size() != E.bands) {
        throw InputError("fcls: spectrum has " + std::to_string(x.size()) + " bands, endmembers have " +
                         std::to_string(E.bands));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw InputError("fcls: non-finite value in spectrum");
    }
    const Eigen::Map<const Eigen::MatrixXd> M(E.values.data(), static_cast<Eigen::Index>(E.bands),
                                              static_cast<Eigen::Index>(E.count));
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    return Quadratic{std::move(gram), M.transpose() * xv, xv.squaredNorm()};
}

// Lipschitz constant of the gradient, 2 * lambda_max(E'E). Warns on rank deficiency.
double lipschitz_of(const Eigen::MatrixXd& gram) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    if (!(hi > 0.0)) throw InputError("fcls: endmember matrix is zero");
    if (lo <= 1e-12 * hi) std::cerr << "warning: fcls: endmember matrix is not full column rank\n";
    return 2.0 * hi;
}

void check_config(const FclsConfig& cfg) {
    if (!(cfg.tol > 0.0)) throw ConfigError("fcls: tol must be positive");
}

}  // namespace

FclsResult fcls_solve(std::span<const double> x, const EndmemberMatrix& endmembers, const FclsConfig& cfg) {
    check_config(cfg);
    endmembers.validate();
    Eigen::MatrixXd gram = gram_matrix(endmembers);
    const double L = lipschitz_of(gram);
    return solve_with(make_quadratic(x, endmembers, std::move(gram)), L, cfg);
}

AbundanceMap fcls_unmix_cube(const HyperCube& cube, const EndmemberMatrix& endmembers, const FclsConfig& cfg) {
    check_config(cfg);
    if (cube.pixel_count() == 0 || cube.bands == 0) throw InputError("fcls: empty cube");
    if (cube.bands != endmembers.bands) {
        throw InputError("fcls: cube has " + std::to_string(cube.bands) + " bands, endmembers have " +
                         std::to_string(endmembers.bands));
    }
    endmembers.validate();
    const Eigen::MatrixXd gram = gram_matrix(endmembers);
    const double L = lipschitz_of(gram);

    AbundanceMap map(cube.width, cube.height, endmembers.count);
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
        try {
            const FclsResult r = solve_with(make_quadratic(cube.pixel(p), endmembers, gram), L, cfg);
            std::copy(r.abundances.begin(), r.abundances.end(), map.pixel(p).begin());
        } catch (const InputError& e) {
            throw InputError(std::string(e.what()) + " at pixel (x=" + std::to_string(p % cube.width) +
                             ", y=" + std::to_string(p / cube.width) + ")");
        }
    }
    return map;
}

}  // namespace dscn
