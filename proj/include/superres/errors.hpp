#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace superres {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A parameter is outside its stated domain (gamma out of (-1,1), K < 2, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// An iterative procedure (crosstalk strength calibration, ...) failed to converge.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

// Vector/matrix sizes passed together do not match.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// The scene leaves no usable measurement modes (d = 0, or everything removed
// by the axis-aligned reduction).
class DegenerateScene : public Error {
public:
    using Error::Error;
};

// The covariance could not be inverted; carries an (approximate) null direction.
class SingularCovariance : public Error {
public:
    SingularCovariance(const std::string& what, std::vector<double> null_direction)
        : Error(what), null_direction(std::move(null_direction)) {}
    std::vector<double> null_direction;
};

// A requested linear combination has zero variance under the given covariance.
class ZeroVariance : public Error {
public:
    using Error::Error;
};

// The 3x3 Woodbury core of the direct-imaging inverse is not invertible.
// Cannot happen for valid inputs; kept as a defensive error.
class SingularCore : public Error {
public:
    using Error::Error;
};

// d * sqrt(mu * M(d)) never reached 1 on the scan grid. Reports how close it got.
class NoCrossing : public Error {
public:
    NoCrossing(const std::string& what, double max_g, double at_d)
        : Error(what), max_g(max_g), at_d(at_d) {}
    double max_g;
    double at_d;
};

} // namespace superres
