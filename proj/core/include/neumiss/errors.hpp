#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neumiss {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

class IndexOutOfBounds : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NoConvergence : public Error {
public:
    using Error::Error;
};

class CalibrationFailed : public Error {
public:
    using Error::Error;
};

class RateUnreachable : public Error {
public:
    using Error::Error;
};

class NoAnalyticPredictor : public Error {
public:
    using Error::Error;
};

/// Raised by the bound checkers; carries the first order at which the bound failed.
class BoundViolated : public Error {
public:
    BoundViolated(const std::string& what, std::size_t order)
        : Error(what), order_(order) {}
    std::size_t order() const noexcept { return order_; }

private:
    std::size_t order_;
};

class Diverged : public Error {
public:
    using Error::Error;
};

class SupportBoundTooSmall : public Error {
public:
    using Error::Error;
};

class SingularCovariance : public Error {
public:
    using Error::Error;
};

class SingularDesign : public Error {
public:
    using Error::Error;
};

class PatternOverflow : public Error {
public:
    using Error::Error;
};

class ZeroVariance : public Error {
public:
    using Error::Error;
};

class SchemaMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace neumiss
