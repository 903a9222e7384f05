#pragma once

#include <stdexcept>
#include <string>

namespace spectralreg {

/// Shapes of operands do not conform.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition was violated (non-square Jacobian, n > d, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A computation produced a non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double offending)
        : std::runtime_error(what + " (value: " + std::to_string(offending) + ")"),
          value_(offending) {}

    double value() const noexcept { return value_; }

private:
    double value_;
};

/// Configuration or file-level failure; message names the field or path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace spectralreg
