#pragma once

#include <stdexcept>
#include <string>

namespace shmlab {

/// Invalid configuration, precondition violation, or shape mismatch.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Filesystem or serialization failure.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: singular system, non-finite value, invalid moments.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace shmlab
