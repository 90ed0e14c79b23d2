#pragma once

#include "dscn/tensor.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

namespace test_support {

inline dscn::Tensor random_tensor(std::mt19937_64& rng, std::size_t n, std::size_t c, std::size_t l,
                                  double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    dscn::Tensor t(n, c, l);
    for (double& v : t.values()) v = d(rng);
    return t;
}

inline dscn::Tensor from_values(std::size_t n, std::size_t c, std::size_t l, std::initializer_list<double> v) {
    dscn::Tensor t(n, c, l);
    std::copy(v.begin(), v.end(), t.values().begin());
    return t;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("dscn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace test_support
