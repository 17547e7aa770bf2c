#pragma once

#include <stdexcept>
#include <string>
#include <vector>
#include <cstddef>

namespace uau {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes. The message names the op and both shapes.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& op, const std::vector<std::size_t>& lhs,
             const std::vector<std::size_t>& rhs);
  explicit ShapeError(const std::string& message) : Error(message) {}
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature ran out of subdivisions. Carries the best estimate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double best_estimate, double error_estimate)
      : Error(message), best_estimate_(best_estimate), error_estimate_(error_estimate) {}
  double best_estimate() const { return best_estimate_; }
  double error_estimate() const { return error_estimate_; }

 private:
  double best_estimate_;
  double error_estimate_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace uau
