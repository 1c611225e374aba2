#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pfl {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes (config 1, data 2, numeric 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class DimensionError : public ContractError {
public:
    using ContractError::ContractError;
};

class MetricError : public ContractError {
public:
    using ContractError::ContractError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class CorruptionError : public DataError {
public:
    using DataError::DataError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class AggregationError : public Error {
public:
    using Error::Error;
};

}  // namespace pfl
