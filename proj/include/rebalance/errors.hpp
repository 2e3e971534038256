#pragma once

#include <stdexcept>
#include <string>

namespace rebalance {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroTotalLoad : public Error {
 public:
  ZeroTotalLoad() : Error("mean load is zero") {}
};

class UnknownKey : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// Raised when the exchange loop of the least-load-fit placement exceeds its
/// iteration budget. Signals a degenerate input.
class NonTermination : public Error {
 public:
  using Error::Error;
};

class CountMismatch : public Error {
 public:
  using Error::Error;
};

/// The fluctuation target could not be met within the swap budget.
class Unreachable : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. `field()` names the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace rebalance
