#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace facstat {

// Base class for every error the library raises. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input text (CSV rows, config lines).
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// A value that parsed but violates a record invariant.
class SchemaError : public Error {
public:
    SchemaError(std::string field, std::string value, const std::string& why)
        : Error("field '" + field + "' has invalid value '" + value + "': " + why),
          field_(std::move(field)), value_(std::move(value)), why_(why) {}

    [[nodiscard]] const std::string& field() const noexcept { return field_; }
    [[nodiscard]] const std::string& value() const noexcept { return value_; }
    [[nodiscard]] const std::string& why() const noexcept { return why_; }

private:
    std::string field_;
    std::string value_;
    std::string why_;
};

// Degenerate or inconsistent data for the requested computation.
class DataError : public Error {
public:
    using Error::Error;
};

// An iterative solver failed to converge or produced non-finite values.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::size_t iterations)
        : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
          iterations_(iterations) {}

    [[nodiscard]] std::size_t iterations() const noexcept { return iterations_; }

private:
    std::size_t iterations_;
};

} // namespace facstat
