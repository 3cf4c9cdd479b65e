#pragma once

#include <stdexcept>
#include <string>

namespace swiftdiff {

// Shape-incompatible operands. Message names the op and both shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf produced or consumed where finite values are required.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent on-disk artifacts.
class DataError : public std::runtime_error {
public:
    enum class Code {
        io,
        magic_mismatch,
        version_mismatch,
        truncated,
        header_mismatch,
        bad_content,
    };

    DataError(Code code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    Code code() const { return code_; }

private:
    Code code_;
};

// Invalid configuration or command usage.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace swiftdiff
