#pragma once

#include <stdexcept>
#include <string>

namespace pcreg {

/// Invalid argument or configuration value (bad caps, empty clouds, shape mismatches).
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed or missing input data (files, manifests, weight containers).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerically degenerate input to a solver (rank-deficient covariance, too few points).
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace pcreg
