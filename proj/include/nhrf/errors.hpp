#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nhrf {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed expression text. offset is the 1-based byte position.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class SymbolError : public Error {
public:
    SymbolError(const std::string& msg, std::string symbol)
        : Error(msg + ": " + symbol), symbol_(std::move(symbol)) {}
    const std::string& symbol() const { return symbol_; }

private:
    std::string symbol_;
};

class ArityError : public Error {
public:
    using Error::Error;
};

// Evaluation outside a function's domain; carries the printed subexpression.
class DomainError : public Error {
public:
    DomainError(const std::string& msg, std::string subexpr)
        : Error(msg + " in " + subexpr), subexpr_(std::move(subexpr)) {}
    const std::string& subexpression() const { return subexpr_; }

private:
    std::string subexpr_;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class DegenerateMetricError : public Error {
public:
    using Error::Error;
};

class SignatureError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// Numerical breakdown (positivity loss, NaN, divergence).
class NumericalError : public Error {
public:
    using Error::Error;
};

// Scenario schema problems; path names the offending key.
class ValidationError : public Error {
public:
    ValidationError(const std::string& path, const std::string& msg)
        : Error(path.empty() ? msg : path + ": " + msg), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace nhrf
