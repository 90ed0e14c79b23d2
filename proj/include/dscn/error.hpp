#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace dscn {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent shapes or hyperparameters (bad layer geometry, K too large...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied data that does not fit the operation (wrong band count, empty cube).
class InputError : public Error {
public:
    using Error::Error;
};

/// Operation invoked out of order, e.g. backward without a forward cache.
class UsageError : public Error {
public:
    using Error::Error;
};

/// A documented precondition on values was violated (negative entries, off-simplex input).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Mathematical domain violation (zero-norm spectrum, non-positive similarity).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file. Carries the byte offset where reading failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// NaN/Inf encountered in a tensor. `tensor()` names the offender.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::string tensor)
        : Error(what), tensor_(std::move(tensor)) {}

    const std::string& tensor() const noexcept { return tensor_; }

private:
    std::string tensor_;
};

}  // namespace dscn
