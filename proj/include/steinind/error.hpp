#pragma once

#include <stdexcept>
#include <string>

namespace steinind {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user input: bad parameters, unknown names, malformed config files.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Quadrature did not reach its tolerance. Carries what was achieved.
class QuadratureError : public Error {
public:
    QuadratureError(const std::string& what, double estimate, double error_bound)
        : Error(what + " (estimate " + std::to_string(estimate) + ", error bound " +
                std::to_string(error_bound) + ")"),
          estimate_(estimate),
          error_bound_(error_bound) {}

    double estimate() const noexcept { return estimate_; }
    double error_bound() const noexcept { return error_bound_; }

private:
    double estimate_;
    double error_bound_;
};

/// A point is outside the region where an operation is numerically defined
/// (outside the support, too close to an edge, density underflow).
class DomainError : public Error {
public:
    DomainError(const std::string& what, double point)
        : Error(what + " at x = " + std::to_string(point)), point_(point) {}

    double point() const noexcept { return point_; }

private:
    double point_;
};

/// A Monte Carlo or algebraic consistency check failed at run time.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace steinind
