#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace thinfb {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed configuration, violated precondition, NaN data.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// An iterative method ran out of budget. Carries the residual history.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

// A quadrature or discrete measure cannot resolve the requested integral.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

}  // namespace thinfb
