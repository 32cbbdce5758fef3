#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lsgp {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or dimensions that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A parameter outside its valid domain (non-positive lengthscale, h <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Cholesky failed even at the largest jitter on the ladder.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// A result that is numerically invalid beyond tolerance (e.g. negative variance).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Bad or missing input data.
class DataError : public Error {
public:
    using Error::Error;
};

class FileError : public DataError {
public:
    using DataError::DataError;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class MissingColumnError : public DataError {
public:
    using DataError::DataError;
};

/// Invalid configuration (unknown key, malformed value).
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace lsgp
