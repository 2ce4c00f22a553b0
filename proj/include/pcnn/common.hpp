#pragma once

#include <stdexcept>
#include <string>

namespace pcnn {

/// Shape or length mismatch between operands.
class DimError : public std::runtime_error {
public:
    explicit DimError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

/// Invalid configuration (out-of-bound parameters, bad layer wiring, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("configuration error: " + msg) {}
};

/// Bad input data (label out of range, degenerate distribution, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

} // namespace pcnn
