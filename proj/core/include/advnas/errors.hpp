#pragma once

#include <stdexcept>
#include <string>

namespace advnas {

// Error taxonomy. The CLI maps these onto process exit codes:
// ConfigError -> 2, FormatError -> 3, NumericError -> 4, anything else -> 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-facing configuration: unknown keys, invalid values, missing paths.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed file contents: architecture files, checkpoints, manifests.
class FormatError : public Error {
public:
    using Error::Error;
};

// Non-finite values, failed numeric preconditions.
class NumericError : public Error {
public:
    using Error::Error;
};

// Violated API contract (programming error rather than bad input).
class ContractError : public Error {
public:
    using Error::Error;
};

// Shape/dimension mismatch between tensors.
class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

} // namespace advnas
