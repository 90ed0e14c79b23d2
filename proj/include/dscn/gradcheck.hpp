#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace dscn {

struct GradCheckOptions {
    double h = 1e-3;
    double tol = 1e-4;
    /// Tensors larger than this are checked on a random coordinate subset.
    std::size_t full_check_limit = 256;
    /// Subset size for large tensors (at least 64).
    std::size_t sample_count = 64;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    std::size_t checked = 0;
    bool passed = true;
};

using ScalarObjective = std::function<double(std::span<const double>)>;

/// Compares `analytic` against central differences of `f` at `theta`.
///
/// Relative error per coordinate is |a - n| / max(1, |a|, |n|). Raises
/// ContractError if two evaluations of f at theta disagree.
GradCheckReport grad_check(const ScalarObjective& f, std::span<const double> theta,
                           std::span<const double> analytic, const GradCheckOptions& opts = {});

}  // namespace dscn
