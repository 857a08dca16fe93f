#pragma once

#include <stdexcept>
#include <string>

namespace gridpse {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Input that parses but violates a model invariant or references a missing element.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (non-convergence, singular system, infeasible subproblem).
class SolverError : public Error {
public:
    using Error::Error;
};

}  // namespace gridpse
