#pragma once

#include <stdexcept>
#include <string>

namespace surgseg {

// Error categories map one-to-one onto CLI exit codes (see cli.hpp).

/// Invalid configuration or parameter value (exit code 1).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad input data: unreadable files, malformed annotations (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed JSON; carries the zero-based offset of the offending byte.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : DataError(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Tensor dimension disagreement (exit code 3).
class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Optimization failure such as a non-finite loss or gradient (exit code 3).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace surgseg
