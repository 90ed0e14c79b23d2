#pragma once

#include "dscn/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace dscn {

/// W x H x B reflectance cube. Pixels are row-major, bands contiguous per pixel.
struct HyperCube {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t bands = 0;
    std::vector<double> data;

    HyperCube() = default;
    HyperCube(std::size_t w, std::size_t h, std::size_t b) : width(w), height(h), bands(b), data(w * h * b) {}

    std::size_t pixel_count() const noexcept { return width * height; }
    std::span<double> pixel(std::size_t i) noexcept { return {data.data() + i * bands, bands}; }
    std::span<const double> pixel(std::size_t i) const noexcept { return {data.data() + i * bands, bands}; }

    friend bool operator==(const HyperCube&, const HyperCube&) = default;
};

/// B x K endmember signatures, stored column-major (each endmember contiguous).
struct EndmemberMatrix {
    std::size_t bands = 0;
    std::size_t count = 0;
    std::vector<double> values;

    EndmemberMatrix() = default;
    EndmemberMatrix(std::size_t b, std::size_t k) : bands(b), count(k), values(b * k) {}

    double& operator()(std::size_t band, std::size_t k) noexcept { return values[k * bands + band]; }
    double operator()(std::size_t band, std::size_t k) const noexcept { return values[k * bands + band]; }
    std::span<const double> column(std::size_t k) const noexcept { return {values.data() + k * bands, bands}; }
    std::span<double> column(std::size_t k) noexcept { return {values.data() + k * bands, bands}; }

    /// Throws InputError on non-finite values or an all-zero column.
    void validate() const;

    friend bool operator==(const EndmemberMatrix&, const EndmemberMatrix&) = default;
};

/// W x H x K per-pixel abundance fractions, pixel-major.
struct AbundanceMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t count = 0;
    std::vector<double> data;

    AbundanceMap() = default;
    AbundanceMap(std::size_t w, std::size_t h, std::size_t k) : width(w), height(h), count(k), data(w * h * k) {}

    std::size_t pixel_count() const noexcept { return width * height; }
    std::span<double> pixel(std::size_t i) noexcept { return {data.data() + i * count, count}; }
    std::span<const double> pixel(std::size_t i) const noexcept { return {data.data() + i * count, count}; }

    friend bool operator==(const AbundanceMap&, const AbundanceMap&) = default;
};

/// Gathers pixels into an encoder batch of shape (N, 1, B).
Tensor gather_pixels(const HyperCube& cube, std::span<const std::size_t> indices);

/// Largest deviation of any pixel from {y >= 0, sum y = 1}.
double simplex_violation(std::span<const double> y);

}  // namespace dscn
