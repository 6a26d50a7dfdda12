#pragma once

#include <stdexcept>
#include <string>

namespace bers {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a numerical routine meets a degenerate input (non-SPD
/// matrix, undefined moment, non-finite value).
class NumericalError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NotSymmetric : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// E[sigma^2] of InvGamma(alpha, beta) is undefined for alpha <= 1.
class AlphaTooSmall : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonScalarOutput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class UnknownHead : public Error {
public:
    using Error::Error;
};

class PopulationTooSmall : public Error {
public:
    using Error::Error;
};

class InvalidAction : public Error {
public:
    using Error::Error;
};

class NegativeInput : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class MissingDataset : public Error {
public:
    using Error::Error;
};

class IOFailure : public Error {
public:
    using Error::Error;
};

}  // namespace bers
