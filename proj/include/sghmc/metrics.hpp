#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sghmc/theory.hpp"
#include "sghmc/types.hpp"

namespace sghmc {

using SampleCloud = std::vector<Vector>;

constexpr std::size_t kExactAssignmentCap = 64;

struct DistanceReport {
  std::string metric;
  double p = 1.0;
  std::size_t n = 0;
  double value = 0.0;
  std::string method;
  std::vector<std::string> flags;

  nlohmann::json to_json() const;
};

// Minimum-cost perfect matching on a square cost matrix (row-major n*n).
// Returns the column assigned to each row.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n);

// Order-statistics coupling. Clouds of unequal size are resampled with
// replacement to the larger size; `resampled` reports whether that happened.
double wasserstein_1d(const std::vector<double>& a, const std::vector<double>& b,
                      double p, std::uint64_t seed = 0, bool* resampled = nullptr);
double wasserstein_1d(const SampleCloud& a, const SampleCloud& b, double p,
                      std::uint64_t seed = 0, bool* resampled = nullptr);

// Exact assignment on |a_i - b_j|^p for equal sizes n <= 64.
double wasserstein_exact_small(const SampleCloud& a, const SampleCloud& b, double p);

// (mean over directions of W_p^p of the projected clouds)^{1/p}.
double sliced_wasserstein(const SampleCloud& a, const SampleCloud& b, double p,
                          std::size_t n_projections = 128, std::uint64_t seed = 0);

// Empirical W_rho between clouds of stacked (x, v) points in R^{2d}.
double rho_distance_cloud(const SampleCloud& a, const SampleCloud& b,
                          const HFunction& h, const LyapunovParams& lyap);

struct Moments {
  Vector mean;
  Vector variance;  // per coordinate, population normalisation
  double radial = 0.0;  // (1/n) sum |a_i|^order
  int order = 2;

  nlohmann::json to_json() const;
};

Moments empirical_moments(const SampleCloud& a, int order);

struct ContinuityCheck {
  double lhs = 0.0;
  double rhs = 0.0;            // sigma = max(moments)/2
  double rhs_corrected = 0.0;  // sigma = (sum of moments)/2
  double sigma = 0.0;
  double sigma_corrected = 0.0;
  double wasserstein = 0.0;

  bool holds() const { return lhs <= rhs; }
  bool holds_corrected() const { return lhs <= rhs_corrected; }
};

// |mean G(a) - mean G(b)| against (c1 sigma + c2) W_p(a, b) for G with
// |grad G(w)| <= c1 |w| + c2, and sigma built from the q-th moments.
ContinuityCheck quad_growth_continuity_check(
    const std::function<double(const Vector&)>& G, double c1, double c2,
    const SampleCloud& a, const SampleCloud& b, double p, double q);

// Splits a trajectory state list into (x, v) stacked points.
SampleCloud stack_states(const std::vector<Vector>& xs, const std::vector<Vector>& vs);

}  // namespace sghmc
