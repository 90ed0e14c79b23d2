#include "dscn/gradcheck.hpp"

#include "dscn/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace dscn {

GradCheckReport grad_check(const ScalarObjective& f, std::span<const double> theta,
                           std::span<const double> analytic, const GradCheckOptions& opts) {
    if (!(opts.h > 0.0)) throw ConfigError("grad_check: h must be positive");
    if (analytic.size() != theta.size()) {
        throw ConfigError("grad_check: analytic gradient has " + std::to_string(analytic.size()) +
                          " entries for " + std::to_string(theta.size()) + " parameters");
    }

    std::vector<double> point(theta.begin(), theta.end());
    const double f0 = f(point);
    const double f1 = f(point);
    if (std::bit_cast<std::uint64_t>(f0) != std::bit_cast<std::uint64_t>(f1)) {
        throw ContractError("grad_check: objective is non-deterministic (" + std::to_string(f0) +
                            " vs " + std::to_string(f1) + ")");
    }

    std::vector<std::size_t> coords(theta.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > opts.full_check_limit) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(std::max<std::size_t>(opts.sample_count, 64));
        coords.resize(std::min(coords.size(), theta.size()));
        std::sort(coords.begin(), coords.end());
    }

    GradCheckReport report;
    for (std::size_t i : coords) {
        const double saved = point[i];
        point[i] = saved + opts.h;
        const double fp = f(point);
        point[i] = saved - opts.h;
        const double fm = f(point);
        point[i] = saved;

        const double numeric = (fp - fm) / (2.0 * opts.h);
        const double a = analytic[i];
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        double err = std::abs(a - numeric) / denom;
        if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
        if (report.checked == 0 || err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
        ++report.checked;
    }
    report.passed = report.max_rel_error < opts.tol;
    return report;
}

}  // namespace dscn
