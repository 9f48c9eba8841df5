#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bdsde {

/// Bad user input: malformed spec, out-of-range parameter, off-grid shift.
struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A consumer asked for a field value at a point that was never declared
/// for that step. The sampling pipeline must pre-register every
/// evaluation site before increments are drawn.
struct MissingPointError : std::runtime_error {
    MissingPointError(std::size_t step, const std::string& detail)
        : std::runtime_error("missing point at step " + std::to_string(step) + ": " + detail),
          step(step) {}
    std::size_t step;
};

/// Numerical failure: factorization breakdown, divergence, conditioning.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Two artifacts that must share provenance (same field realization,
/// same grid) do not.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Configuration errors carry the offending keys for the CLI report.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& msg, std::vector<std::string> bad_keys = {})
        : std::runtime_error(msg), keys(std::move(bad_keys)) {}
    std::vector<std::string> keys;
};

} // namespace bdsde
