#include "dscn/tensor.hpp"

#include "dscn/error.hpp"

#include <cmath>

namespace dscn {

Tensor Tensor::reshaped(std::size_t n, std::size_t c, std::size_t l) const {
    if (n * c * l != data_.size()) {
        throw ConfigError("cannot reshape " + shape_string() + " to (" + std::to_string(n) + ", " +
                          std::to_string(c) + ", " + std::to_string(l) + ")");
    }
    Tensor out = *this;
    out.n_ = n;
    out.c_ = c;
    out.l_ = l;
    return out;
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const {
    return "(" + std::to_string(n_) + ", " + std::to_string(c_) + ", " + std::to_string(l_) + ")";
}

}  // namespace dscn
