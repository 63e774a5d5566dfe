#pragma once

#include <stdexcept>
#include <string>

namespace ldgan {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or operator shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value violates its documented range or divisibility rule.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A file on disk is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Rank-deficient input to a factorization.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was started before the stage it depends on.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace ldgan
