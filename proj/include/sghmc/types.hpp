#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sghmc {

using Vector = Eigen::VectorXd;
using Sample = Eigen::VectorXd;

// Thrown for inconsistent user input: unknown names, bad shapes, empty data.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite objective value or gradient at a dataset sample.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// A chain produced a non-finite coordinate.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::uint64_t step)
      : std::runtime_error(what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

// Iterative numerical procedure failed (fixed point, quadrature validity).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace sghmc
