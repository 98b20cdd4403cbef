#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unloc {

/// Base for every error the library raises on bad user input or config.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violated an operation's precondition (shape, range, order).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or unsupported configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Annotation/schema violation; names the offending record.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// An API was used in a mode it does not support.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Synthetic data could not be generated under the requested constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace unloc
