#pragma once

#include <stdexcept>
#include <string>

namespace adfl {

// Solver failed to reach the requested residual; signals pathological
// parameters rather than a recoverable condition.
struct NonConvergence : std::runtime_error {
    explicit NonConvergence(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateCurve : std::runtime_error {
    explicit DegenerateCurve(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientClassSize : std::runtime_error {
    explicit InsufficientClassSize(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteGradient : std::runtime_error {
    explicit NonFiniteGradient(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyCohort : std::runtime_error {
    explicit EmptyCohort(const std::string& msg) : std::runtime_error(msg) {}
};

struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnknownSender : std::runtime_error {
    explicit UnknownSender(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConditionViolated : std::runtime_error {
    explicit ConditionViolated(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegeneratePair : std::runtime_error {
    explicit DegeneratePair(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adfl
