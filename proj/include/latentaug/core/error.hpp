#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace latentaug {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kDependency = 3,
  kFormat = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kInternal; }
};

// Incompatible tensor or embedding shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An object was used in a state that does not allow the call.
class StateError : public Error {
 public:
  using Error::Error;
};

// Transform parameter outside its declared range.
class ParameterError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

class DependencyError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kDependency; }
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kFormat; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A run needs more memory or room than it was given.
class CapacityError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

class MetricError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

}  // namespace latentaug
