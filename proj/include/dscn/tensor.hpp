#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dscn {

/// Dense rank-3 array of doubles, row-major over (n, c, l).
///
/// Activations use (sample, channel, position). Kernel banks reuse the same
/// layout as (out_channel, in_channel, tap), dense weights as (out, in, 1) and
/// vector batches as (sample, feature, 1).
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t n, std::size_t c, std::size_t l, double fill = 0.0)
        : n_(n), c_(c), l_(l), data_(n * c * l, fill) {}

    std::size_t n() const noexcept { return n_; }
    std::size_t c() const noexcept { return c_; }
    std::size_t l() const noexcept { return l_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return data_[(i * c_ + j) * l_ + k];
    }
    const double& operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[(i * c_ + j) * l_ + k];
    }

    double& operator[](std::size_t flat) noexcept { return data_[flat]; }
    const double& operator[](std::size_t flat) const noexcept { return data_[flat]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    /// Same storage, new dims. Element count must match.
    Tensor reshaped(std::size_t n, std::size_t c, std::size_t l) const;

    bool same_shape(const Tensor& o) const noexcept {
        return n_ == o.n_ && c_ == o.c_ && l_ == o.l_;
    }
    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t n_ = 0, c_ = 0, l_ = 0;
    std::vector<double> data_;
};

}  // namespace dscn
