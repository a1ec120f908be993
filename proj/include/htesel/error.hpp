#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace htesel {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad flags, missing files, bad JSON).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed CSV input. `line()` is 1-based and counts the header.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// A dataset that violates a structural requirement (one treatment arm, size).
class DataError : public Error {
public:
  using Error::Error;
};

/// Numerical failure while fitting a nuisance model.
class FitError : public Error {
public:
  using Error::Error;
};

/// A selector could not produce a decision (degenerate variance, bad split).
class SelectionError : public Error {
public:
  using Error::Error;
};

}  // namespace htesel
