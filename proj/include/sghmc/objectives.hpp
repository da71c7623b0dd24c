#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sghmc/types.hpp"

namespace sghmc {

// Constants certifying the regularity of a component loss f(x, z):
//   |f(0,z)| <= A0,  ||grad f(0,z)|| <= B,
//   ||grad f(x1,z) - grad f(x2,z)|| <= M ||x1 - x2||,
//   <x, grad f(x,z)> >= m ||x||^2 - b.
struct SmoothnessCertificate {
  double A0 = 0.0;
  double B = 0.0;
  double M = 1.0;
  double m = 1.0;
  double b = 0.0;

  // Throws ConfigError unless all fields are finite, M > 0, m > 0, m <= M.
  void validate() const;
  nlohmann::json to_json() const;
};

struct ObjectiveSpec {
  std::string name;
  int dim = 1;
  std::function<double(const Vector& x, const Sample& z)> value;
  // Writes grad_x f(x, z) into `out`, which is already sized to `dim`.
  std::function<void(const Vector& x, const Sample& z, Vector& out)> gradient;
  SmoothnessCertificate cert;
  nlohmann::json params = nlohmann::json::object();

  double f(const Vector& x, const Sample& z) const { return value(x, z); }
  Vector grad(const Vector& x, const Sample& z) const {
    Vector out(dim);
    gradient(x, z, out);
    return out;
  }
};

struct DatasetSpec {
  std::string generator = "gaussian";  // gaussian | mixture
  std::size_t n = 100;
  int dim = 1;
  std::uint64_t seed = 0;
  double location = 0.0;
  double scale = 1.0;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct Dataset {
  std::vector<Sample> samples;
  std::string generator_id;
  std::uint64_t seed = 0;
  int dim = 1;
  double location = 0.0;
  double scale = 1.0;

  std::size_t n() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Deterministic given the spec: regenerating reproduces the samples bit for
// bit. gaussian: z = location*1 + scale*xi. mixture: z = +-location*1 +
// scale*xi with a fair sign.
Dataset generate_dataset(const DatasetSpec& spec);
// Wraps caller-supplied samples (generator_id "fixed").
Dataset dataset_from_samples(std::vector<Sample> samples);
double max_sample_norm(const Dataset& data);

double empirical_risk(const Vector& x, const ObjectiveSpec& obj,
                      const Dataset& data);
Vector empirical_gradient(const Vector& x, const ObjectiveSpec& obj,
                          const Dataset& data);

// Built-in suite. Each constructor derives its certificate analytically from
// the parameters and the largest sample norm of `data`.
//
// quadratic:  f = (m0/2) ||x - shift*z||^2
ObjectiveSpec make_quadratic(int dim, double m0, double shift,
                             const Dataset& data);
// double_well: f = sum_i u(x_i) + (kappa/2)||x - z||^2 + dim/4, where
// u(t) = t^4/4 - t^2/2 for |t| <= tail_start and continues as its
// second-order Taylor expansion beyond, so the gradient is Lipschitz.
ObjectiveSpec make_double_well(int dim, double kappa, double tail_start,
                               const Dataset& data);
// gaussian_mixture: f = -log(e^{-|x-z|^2/2}/2 + e^{-|x+z|^2/2}/2)
//                       + ridge ||x||^2 + offset
ObjectiveSpec make_gaussian_mixture(int dim, double ridge, double offset,
                                    const Dataset& data);

// Dispatch by name with JSON parameters; unknown names throw ConfigError.
ObjectiveSpec make_objective(const std::string& name,
                             const nlohmann::json& params, const Dataset& data);
std::vector<std::string> builtin_objective_names();

struct AuditCheck {
  std::string assumption;
  bool pass = false;
  // Slack of the checked inequality at the worst probe; negative on failure.
  double margin = 0.0;
  nlohmann::json witness;
  std::string note;
};

struct AuditReport {
  std::vector<AuditCheck> checks;
  std::size_t probes = 0;
  double radius = 0.0;

  bool all_pass() const;
  const AuditCheck& check(const std::string& assumption) const;
  nlohmann::json to_json() const;
};

// 10 * max(1, sqrt(b/m)).
double default_probe_radius(const SmoothnessCertificate& cert);

// Probes random points in the ball of `radius` against every dataset sample.
// The Lipschitz estimate is a lower bound on the true constant, so a pass
// means no violation was found.
AuditReport audit_assumptions(const ObjectiveSpec& obj, const Dataset& data,
                              std::size_t probes, double radius,
                              std::uint64_t seed,
                              std::size_t lipschitz_pairs = 10000);

struct QuadGrowthSandwich {
  double lower = 0.0;
  double mid = 0.0;
  double upper = 0.0;
  // Relative slack absorbs rounding when a bound is attained exactly.
  bool holds(double rel = 1e-12) const {
    const double tol = rel * (1.0 + std::abs(lower) + std::abs(mid) + std::abs(upper));
    return lower <= mid + tol && mid <= upper + tol;
  }
};

// (m/3)|x|^2 - (b/2) log 3 <= f(x,z) <= (M/2)|x|^2 + B|x| + A0
QuadGrowthSandwich quad_growth_sandwich(const ObjectiveSpec& obj,
                                        const Vector& x, const Sample& z);

}  // namespace sghmc
