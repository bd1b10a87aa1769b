#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sraf {

// Base of every failure raised by the library. Numerical breakdowns are never
// repaired internally; they surface as one of the types below.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// Cholesky pivot <= 0: the matrix handed in as a covariance is not PD.
class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

// Zero or subnormal diagonal in a triangular factor.
class SingularTriangular : public Error {
public:
    using Error::Error;
};

class SingularMatrix : public Error {
public:
    using Error::Error;
};

// A post-array triangular block lost rank; the filter step is degenerate.
class SingularPostArray : public Error {
public:
    using Error::Error;
};

// Parameter value outside the admissible set of a model family.
class DomainError : public Error {
public:
    using Error::Error;
};

// Conventional filter: HPH' + R is not positive definite in working precision.
class InnovationCovSingular : public Error {
public:
    using Error::Error;
};

// Malformed configuration, override, or input file.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Data file whose contents are unusable (bad header, non-numeric cell).
class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A filter pass that broke down at measurement `step` (1-based; 0 means the
// model could not be evaluated at the requested parameter).
class FilterFailure : public Error {
public:
    FilterFailure(std::size_t step, std::string cause)
        : Error("filter failure at step " + std::to_string(step) + ": " + cause),
          step_(step),
          cause_(std::move(cause)) {}

    std::size_t step() const noexcept { return step_; }
    const std::string& cause() const noexcept { return cause_; }

private:
    std::size_t step_;
    std::string cause_;
};

}  // namespace sraf
