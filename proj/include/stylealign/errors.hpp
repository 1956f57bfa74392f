#pragma once

#include <stdexcept>
#include <string>

namespace stylealign {

// Base for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user-facing configuration (configs, CLI arguments, corpus metadata).
// CLI maps these to exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Tensor shape disagreement.
class ShapeError : public Error {
public:
    using Error::Error;
};

// API misuse (e.g. backward seeded from a non-scalar).
class ContractError : public Error {
public:
    using Error::Error;
};

// Inputs that are structurally valid but numerically unusable
// (all-masked pooling, zero-norm embeddings).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Token outside the closed vocabulary.
class VocabularyError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// File/serialization failures. CLI maps these to exit code 2.
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finiteness is contractual (NaN loss abort).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace stylealign
