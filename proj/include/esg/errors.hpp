#pragma once

#include <stdexcept>
#include <string>

namespace esg {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Correlation spec is not positive semi-definite, or a Cholesky pivot fails.
class NotPositiveDefinite : public Error {
public:
    using Error::Error;
};

// A loading-matrix radicand is non-positive or a divisor vanishes.
class DegenerateCorrelation : public Error {
public:
    using Error::Error;
};

// Vector/matrix sizes disagree.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// theta fell to or below the floor where eta = -gamma r / (rho_rGamma theta)
// can no longer be evaluated; the step is rejected and the path flagged.
class ThetaUnderflow : public Error {
public:
    using Error::Error;
};

// rho_rGamma = 0 with gamma != 0 leaves the regularity eta undefined.
class ZeroRhoRGamma : public Error {
public:
    using Error::Error;
};

// A state component became NaN or infinite during stepping.
class NonFiniteState : public Error {
public:
    using Error::Error;
};

// Operator-calculus lookup for a coefficient outside the registered table.
class UnsupportedCoefficient : public Error {
public:
    using Error::Error;
};

// Closed-form inputs outside the region where the formula is defined.
class FormulaInapplicable : public Error {
public:
    using Error::Error;
};

// Config file parse or validation failure (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Histogram or estimator asked to operate on an empty sample.
class EmptyData : public Error {
public:
    using Error::Error;
};

// Per-path failure count exceeded the configured rate limit (CLI exit code 3).
class FailureRateExceeded : public Error {
public:
    using Error::Error;
};

}  // namespace esg
