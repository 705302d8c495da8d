#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hiergauss {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sample dimension does not match the kernel or model.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A kernel tree, config or model violates one of its invariants.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input text could not be parsed. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Linear solve failed (e.g. the regularized Gram matrix is not positive definite).
class SolverError : public Error {
public:
    using Error::Error;
};

}  // namespace hiergauss
