#pragma once

#include "dscn/hsi.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dscn {

enum class StepRule { Lipschitz, Backtracking };

struct FclsConfig {
    std::size_t max_iters = 2000;
    double tol = 1e-10;  // on the gradient-mapping norm
    StepRule step_rule = StepRule::Lipschitz;
    bool record_objective = false;
};

/// Euclidean projection onto {y >= 0, sum y = 1} (sort and threshold).
std::vector<double> simplex_project(std::span<const double> v);

struct FclsResult {
    std::vector<double> abundances;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> objective;  // ||x - E y||^2 per iterate, when recorded
};

/// Fully constrained least squares by projected gradient on ||x - E y||^2.
FclsResult fcls_solve(std::span<const double> x, const EndmemberMatrix& endmembers,
                      const FclsConfig& cfg = {});

/// Per-pixel fcls_solve over a cube. Errors carry the pixel coordinates.
AbundanceMap fcls_unmix_cube(const HyperCube& cube, const EndmemberMatrix& endmembers,
                             const FclsConfig& cfg = {});

}  // namespace dscn
