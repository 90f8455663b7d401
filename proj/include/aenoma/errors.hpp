#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aenoma {

/// Invalid configuration, dimension mismatch or violated precondition.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input that cannot be processed, e.g. an all-zero batch handed to power normalization.
class DegenerateInputError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Non-finite loss or gradient during optimization.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::uint64_t iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration_(iteration) {}

    std::uint64_t iteration() const noexcept { return iteration_; }

private:
    std::uint64_t iteration_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ConfigError(message);
}

} // namespace aenoma
