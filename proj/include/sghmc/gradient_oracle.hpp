#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sghmc/objectives.hpp"
#include "sghmc/rng.hpp"

namespace sghmc {

// Unbiased minibatch gradient g(x, U) = (1/l) sum_j grad f(x, z_{I_j}) with
// I_1..I_l drawn i.i.d. uniformly with replacement.
//
// A full-pass oracle skips sampling and returns the exact empirical gradient;
// it still owns an index stream so that it can be swapped into a coupled run.
class MinibatchOracle {
 public:
  MinibatchOracle(const ObjectiveSpec& obj, const Dataset& data,
                  std::size_t batch_size, std::uint64_t stream_seed,
                  bool full_pass = false);

  static MinibatchOracle full(const ObjectiveSpec& obj, const Dataset& data) {
    return MinibatchOracle(obj, data, data.n(), 0, true);
  }

  Vector sample_gradient(const Vector& x);
  // Writes into `out`; avoids an allocation per call in the chain loops.
  void sample_gradient(const Vector& x, Vector& out);
  // Same as sample_gradient but with caller-supplied indices.
  void gradient_at(const Vector& x, const std::vector<std::size_t>& indices,
                   Vector& out) const;
  // Draws the next l indices from the stream.
  void draw_indices(std::vector<std::size_t>& out);

  std::size_t batch_size() const { return batch_size_; }
  bool full_pass() const { return full_pass_; }
  const ObjectiveSpec& objective() const { return *obj_; }
  const Dataset& data() const { return *data_; }

 private:
  const ObjectiveSpec* obj_;
  const Dataset* data_;
  std::size_t batch_size_;
  bool full_pass_;
  Rng rng_;
  std::vector<std::size_t> indices_;
  Vector scratch_;
};

struct VarianceProbe {
  Vector x;
  double variance = 0.0;  // Monte Carlo E|g - grad F|^2
  double ratio = 0.0;     // variance / (2 (M^2|x|^2 + B^2))
};

struct VarianceReport {
  double delta_hat = 0.0;
  std::vector<VarianceProbe> per_probe;
  std::size_t trials = 0;
  std::size_t batch_size = 0;

  nlohmann::json to_json() const;
};

// Monte Carlo estimate of delta in E|g - grad F|^2 <= 2 delta (M^2|x|^2 + B^2).
// Probes with a zero denominator (x = 0 and B = 0) are skipped.
VarianceReport estimate_delta(const ObjectiveSpec& obj, const Dataset& data,
                              std::size_t batch_size,
                              const std::vector<Vector>& probes,
                              std::size_t trials, std::uint64_t seed,
                              bool full_pass = false);

// Probe set used for delta estimation at a given radius: the origin (when B>0)
// plus random directions at fixed fractions of the radius.
std::vector<Vector> default_variance_probes(int dim, double radius,
                                            std::size_t per_shell,
                                            std::uint64_t seed);

struct VarianceCurve {
  std::vector<std::size_t> batch_sizes;
  std::vector<double> variances;
  std::optional<double> slope;  // log-log fit; absent for a single point

  nlohmann::json to_json() const;
};

VarianceCurve variance_scaling_curve(const ObjectiveSpec& obj,
                                     const Dataset& data, const Vector& x,
                                     const std::vector<std::size_t>& batch_sizes,
                                     std::size_t trials, std::uint64_t seed);

// Least-squares slope of y on x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sghmc
