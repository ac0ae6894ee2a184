#pragma once

#include <stdexcept>
#include <string>

namespace aghf {

/// Base class of every error raised by the planner.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroGradient : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class SingularFrame : public Error {
 public:
  using Error::Error;
};

class SingularMetric : public Error {
 public:
  using Error::Error;
};

class InvalidOffset : public Error {
 public:
  using Error::Error;
};

/// Raised by a flow step that produced a non-finite state. The caller is
/// expected to retry with a smaller step.
class StepDiverged : public Error {
 public:
  using Error::Error;
};

/// Invalid user input. `field` names the offending configuration key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace aghf
