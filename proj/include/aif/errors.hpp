#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aif {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `key()` names the offending setting when known.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string key = {})
      : Error(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergence : public NumericalError {
 public:
  TrainingDivergence(const std::string& message, std::size_t particle)
      : NumericalError(message), particle_(particle) {}
  std::size_t particle() const { return particle_; }

 private:
  std::size_t particle_;
};

class RolloutDivergence : public NumericalError {
 public:
  RolloutDivergence(const std::string& message, std::size_t step)
      : NumericalError(message), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class SimulationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class PlanningFailure : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace aif
