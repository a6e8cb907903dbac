#pragma once

#include <stdexcept>
#include <string>

namespace frt {

/// Dimension or element-count mismatch between operands.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

/// A caller violated an API precondition (empty neighbor list, stage order, ...).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, long line)
        : std::runtime_error("parse error: line " + std::to_string(line) + ": " + msg), line_(line) {}
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg), line_(-1) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Invalid configuration value or combination.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

}  // namespace frt
