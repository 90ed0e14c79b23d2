#include "dscn/hsi.hpp"

#include "dscn/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dscn {

void EndmemberMatrix::validate() const {
    if (bands == 0 || count == 0 || values.size() != bands * count) {
        throw InputError("endmember matrix has inconsistent dims " + std::to_string(bands) + "x" +
                         std::to_string(count));
    }
    for (std::size_t k = 0; k < count; ++k) {
        bool nonzero = false;
        for (std::size_t b = 0; b < bands; ++b) {
            const double v = (*this)(b, k);
            if (!std::isfinite(v)) {
                throw InputError("endmember " + std::to_string(k) + " has a non-finite value at band " +
                                 std::to_string(b));
            }
            nonzero = nonzero || v != 0.0;
        }
        if (!nonzero) throw InputError("endmember " + std::to_string(k) + " is all zeros");
    }
}

Tensor gather_pixels(const HyperCube& cube, std::span<const std::size_t> indices) {
    Tensor batch(indices.size(), 1, cube.bands);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= cube.pixel_count()) {
            throw InputError("pixel index " + std::to_string(indices[i]) + " out of range");
        }
        const auto px = cube.pixel(indices[i]);
        std::copy(px.begin(), px.end(), &batch(i, 0, 0));
    }
    return batch;
}

double simplex_violation(std::span<const double> y) {
    double sum = 0.0;
    double worst = 0.0;
    for (double v : y) {
        sum += v;
        worst = std::max(worst, -v);
    }
    return std::max(worst, std::abs(sum - 1.0));
}

}  // namespace dscn
