#pragma once

#include <stdexcept>
#include <string>

namespace joulesim {

/// Raised for malformed configuration input (bad field values, missing
/// sections, inconsistent thresholds). Maps to process exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised when a numerical procedure cannot produce a trustworthy result
/// (no bracketing sign change, reducible chain, stalled iteration).
/// Maps to process exit code 3.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace joulesim
