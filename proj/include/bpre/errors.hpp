// Exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace bpre {

// Assumption A1 has no root because the environment is not subcritical
// (E[X] >= 0).
class NotSubcriticalError : public std::runtime_error {
public:
    explicit NotSubcriticalError(const std::string& msg) : std::runtime_error(msg) {}
};

// E[X] < 0 but E[X e^X] <= 0: no sign change of phi on (0,1).
class NoRootError : public std::runtime_error {
public:
    explicit NoRootError(const std::string& msg) : std::runtime_error(msg) {}
};

// Exact enumeration / DP request exceeds the configured budget.
class SizeLimitError : public std::runtime_error {
public:
    explicit SizeLimitError(const std::string& msg) : std::runtime_error(msg) {}
};

// DP state cap too small: truncated tail mass above threshold.
class TailMassError : public std::runtime_error {
public:
    explicit TailMassError(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejection sampler acceptance rate below the configured minimum.
class TimeoutError : public std::runtime_error {
public:
    explicit TimeoutError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace bpre
