#pragma once

#include <stdexcept>
#include <string>

namespace cryptoknight {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed assembly text. Carries the 1-based source line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Runtime fault inside the interpreter (bounds, immutability, stack).
class ExecutionError : public Error {
 public:
  using Error::Error;
};

/// Bad synthesis request (payload lengths, labels, codegen parameters).
class SynthError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameters during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// I/O or format problem with a persisted artifact.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace cryptoknight
