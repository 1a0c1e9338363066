#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpcal {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument violated a documented precondition (shape, range, finiteness).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A covariance matrix could not be factorized, even after the jitter retry.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string &what, double attempted_jitter = 0.0)
        : Error(what), jitter_(attempted_jitter) {}

    [[nodiscard]] double attempted_jitter() const noexcept { return jitter_; }

private:
    double jitter_;
};

/// A statistic is undefined for the given data (constant truth in R², rank-deficient design).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// Input file missing, unreadable, or lacking required columns.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// A cell or row of an input file could not be accepted.
class ParseError : public Error {
public:
    ParseError(const std::string &what, std::size_t row, std::string column = {})
        : Error(what), row_(row), column_(std::move(column)) {}

    /// 1-based line number in the source file.
    [[nodiscard]] std::size_t row() const noexcept { return row_; }
    [[nodiscard]] const std::string &column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

/// Serialized model has an unknown header or version.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Experiment or synthesis configuration is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace gpcal
