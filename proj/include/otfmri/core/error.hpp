#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace otfmri {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or caller precondition violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing or inconsistent data on disk or in memory.
class DataError : public Error {
 public:
  using Error::Error;
};

// Binary decode failure; carries the byte offset where decoding stopped.
class DecodeError : public DataError {
 public:
  DecodeError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

// Non-finite values produced during computation (activations, losses).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace otfmri
