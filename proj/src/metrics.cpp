#include "sghmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sghmc/rng.hpp"

namespace sghmc {

namespace {

void check_cloud(const SampleCloud& a, const char* what) {
  if (a.empty()) throw ConfigError(std::string(what) + " cloud is empty");
  const auto k = a.front().size();
  for (const auto& x : a) {
    if (x.size() != k) throw ConfigError(std::string(what) + " cloud has mixed dimensions");
    if (!x.allFinite()) throw ConfigError(std::string(what) + " cloud has non-finite points");
  }
}

void check_pair(const SampleCloud& a, const SampleCloud& b) {
  check_cloud(a, "first");
  check_cloud(b, "second");
  if (a.front().size() != b.front().size())
    throw ConfigError("clouds differ in dimension");
}

void check_p(double p) {
  if (!(p >= 1.0)) throw ConfigError("Wasserstein order must be >= 1");
}

double assignment_cost(const std::vector<double>& cost, std::size_t n) {
  const auto col = hungarian(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + col[i]];
  return total;
}

}  // namespace

nlohmann::json DistanceReport::to_json() const {
  return {{"metric", metric}, {"p", p},         {"n", n},
          {"value", value},   {"method", method}, {"flags", flags}};
}

// Shortest augmenting path formulation with row/column potentials.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> col(n);
  for (std::size_t j = 1; j <= n; ++j) col[match[j] - 1] = j - 1;
  return col;
}

double wasserstein_1d(const std::vector<double>& a, const std::vector<double>& b,
                      double p, std::uint64_t seed, bool* resampled) {
  check_p(p);
  if (a.empty() || b.empty()) throw ConfigError("empty cloud");
  std::vector<double> sa = a, sb = b;
  if (resampled) *resampled = false;
  if (sa.size() != sb.size()) {
    auto& small = sa.size() < sb.size() ? sa : sb;
    const std::vector<double> orig = small;
    const std::size_t target = std::max(sa.size(), sb.size());
    Rng rng(derive_seed(seed, "resample"));
    small.resize(target);
    for (auto& x : small) x = orig[rng.index(orig.size())];
    if (resampled) *resampled = true;
  }
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) acc += std::pow(std::abs(sa[i] - sb[i]), p);
  return std::pow(acc / static_cast<double>(sa.size()), 1.0 / p);
}

double wasserstein_1d(const SampleCloud& a, const SampleCloud& b, double p,
                      std::uint64_t seed, bool* resampled) {
  check_pair(a, b);
  if (a.front().size() != 1) throw ConfigError("wasserstein_1d needs one-dimensional clouds");
  std::vector<double> sa, sb;
  for (const auto& x : a) sa.push_back(x[0]);
  for (const auto& x : b) sb.push_back(x[0]);
  return wasserstein_1d(sa, sb, p, seed, resampled);
}

double wasserstein_exact_small(const SampleCloud& a, const SampleCloud& b, double p) {
  check_p(p);
  check_pair(a, b);
  const std::size_t n = a.size();
  if (b.size() != n) throw ConfigError("exact assignment needs equal cloud sizes");
  if (n > kExactAssignmentCap) throw ConfigError("exact assignment limited to n <= 64");
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = std::pow((a[i] - b[j]).norm(), p);
  return std::pow(std::max(0.0, assignment_cost(cost, n)) / n, 1.0 / p);
}

double sliced_wasserstein(const SampleCloud& a, const SampleCloud& b, double p,
                          std::size_t n_projections, std::uint64_t seed) {
  check_p(p);
  check_pair(a, b);
  if (n_projections == 0) throw ConfigError("need at least one projection");
  Rng rng(derive_seed(seed, "sliced"));
  const auto dim = a.front().size();
  std::vector<double> pa(a.size()), pb(b.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < n_projections; ++k) {
    const Vector u = rng.unit_vector(dim);
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = u.dot(a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = u.dot(b[i]);
    acc += std::pow(wasserstein_1d(pa, pb, p, derive_seed(seed, "sliced-resample", k)), p);
  }
  return std::pow(acc / static_cast<double>(n_projections), 1.0 / p);
}

double rho_distance_cloud(const SampleCloud& a, const SampleCloud& b,
                          const HFunction& h, const LyapunovParams& lyap) {
  check_pair(a, b);
  const std::size_t n = a.size();
  if (b.size() != n) throw ConfigError("rho distance needs equal cloud sizes");
  if (n > kExactAssignmentCap) throw ConfigError("rho distance limited to n <= 64");
  const auto k = a.front().size();
  if (k % 2) throw ConfigError("rho distance needs stacked (x, v) points");
  const auto d = k / 2;
  std::vector<double> va(n), vb(n);
  for (std::size_t i = 0; i < n; ++i) {
    va[i] = lyapunov(lyap, a[i].head(d), a[i].tail(d));
    vb[i] = lyapunov(lyap, b[i].head(d), b[i].tail(d));
  }
  const auto& cc = h.constants();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double r =
          r_semimetric(cc, a[i].head(d), a[i].tail(d), b[j].head(d), b[j].tail(d));
      cost[i * n + j] =
          r == 0.0 ? 0.0 : h(r) * (1.0 + cc.epsilon_c * va[i] + cc.epsilon_c * vb[j]);
    }
  return std::max(0.0, assignment_cost(cost, n)) / n;
}

nlohmann::json Moments::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"variance", std::vector<double>(variance.data(), variance.data() + variance.size())},
          {"radial", radial},
          {"order", order}};
}

Moments empirical_moments(const SampleCloud& a, int order) {
  check_cloud(a, "moment");
  if (order < 1) throw ConfigError("moment order must be positive");
  const double n = static_cast<double>(a.size());
  Moments m;
  m.order = order;
  m.mean = Vector::Zero(a.front().size());
  for (const auto& x : a) m.mean += x;
  m.mean /= n;
  m.variance = Vector::Zero(m.mean.size());
  for (const auto& x : a) {
    m.variance += (x - m.mean).array().square().matrix();
    m.radial += std::pow(x.norm(), order);
  }
  m.variance /= n;
  m.radial /= n;
  return m;
}

ContinuityCheck quad_growth_continuity_check(
    const std::function<double(const Vector&)>& G, double c1, double c2,
    const SampleCloud& a, const SampleCloud& b, double p, double q) {
  if (!(p > 1.0) || std::abs(1.0 / p + 1.0 / q - 1.0) > 1e-12)
    throw ConfigError("continuity check needs p > 1 and 1/p + 1/q = 1");
  check_pair(a, b);
  auto mean_G = [&](const SampleCloud& c) {
    double s = 0.0;
    for (const auto& x : c) s += G(x);
    return s / static_cast<double>(c.size());
  };
  auto qnorm = [&](const SampleCloud& c) {
    double s = 0.0;
    for (const auto& x : c) s += std::pow(x.norm(), q);
    return std::pow(s / static_cast<double>(c.size()), 1.0 / q);
  };
  ContinuityCheck out;
  const double qa = qnorm(a), qb = qnorm(b);
  if (!std::isfinite(qa) || !std::isfinite(qb)) throw NumericalError("moment is not finite");
  out.lhs = std::abs(mean_G(a) - mean_G(b));
  out.wasserstein = wasserstein_exact_small(a, b, p);
  out.sigma = 0.5 * std::max(qa, qb);
  out.sigma_corrected = 0.5 * (qa + qb);
  out.rhs = (c1 * out.sigma + c2) * out.wasserstein;
  out.rhs_corrected = (c1 * out.sigma_corrected + c2) * out.wasserstein;
  return out;
}

SampleCloud stack_states(const std::vector<Vector>& xs, const std::vector<Vector>& vs) {
  if (xs.size() != vs.size()) throw ConfigError("position and momentum counts differ");
  SampleCloud out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Vector w(xs[i].size() + vs[i].size());
    w << xs[i], vs[i];
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace sghmc
