#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fcurve {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    ok = 0,
    config = 2,
    data = 3,
    numeric = 4,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept = 0;
};

/// Invalid parameters, options or configuration files.
class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

/// Malformed, incomplete or degenerate input data.
class DataError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::data; }
};

/// Failures of a numerical procedure (factorizations, EM degeneracy).
class NumericError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::numeric; }
};

class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line), detail_(what) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

/// Evaluation point outside the domain of a basis.
class DomainError : public DataError {
public:
    using DataError::DataError;
};

/// Normal equations that cannot be factorized (e.g. lambda = 0 with a rank deficient design).
class RankError : public NumericError {
public:
    using NumericError::NumericError;
};

/// A mixture component lost its support during EM.
class DegenerateComponentError : public NumericError {
public:
    DegenerateComponentError(int iteration, int component, const std::string& what)
        : NumericError("EM iteration " + std::to_string(iteration) + ", component " +
                       std::to_string(component) + ": " + what),
          iteration_(iteration), component_(component) {}
    int iteration() const noexcept { return iteration_; }
    int component() const noexcept { return component_; }

private:
    int iteration_;
    int component_;
};

}  // namespace fcurve
