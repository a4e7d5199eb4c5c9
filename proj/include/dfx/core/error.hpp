#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfx {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument or configuration (alphabet mismatch, invalid config, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Malformed or inconsistent input data (files, labels, shapes).
class FormatError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numeric breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfx
