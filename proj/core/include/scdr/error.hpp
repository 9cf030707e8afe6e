#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scdr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or configuration invariant was violated.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became non-finite during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A required file could not be opened or read.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A rating file row failed to parse. `row()` is 1-based and counts data rows
/// (the header, when present, is not counted).
class MalformedRowError : public ValidationError {
 public:
  MalformedRowError(std::size_t row, const std::string& what)
      : ValidationError("malformed row " + std::to_string(row) + ": " + what),
        row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace scdr
