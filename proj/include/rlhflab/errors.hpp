#pragma once

#include <stdexcept>
#include <string>

namespace rlhflab {

// Invalid configuration, dimension mismatch, malformed file: caller bug or bad input.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A parameter update had to be dropped (non-finite gradient, etc.).
// Long runs catch this, log the diagnostic, and continue.
class UpdateSkipped : public std::runtime_error {
public:
    explicit UpdateSkipped(const std::string& msg) : std::runtime_error(msg) {}
};

class FitError : public std::runtime_error {
public:
    explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rlhflab
