#include "sghmc/gradient_oracle.hpp"

#include <cmath>
#include <set>

namespace sghmc {

MinibatchOracle::MinibatchOracle(const ObjectiveSpec& obj, const Dataset& data,
                                 std::size_t batch_size,
                                 std::uint64_t stream_seed, bool full_pass)
    : obj_(&obj),
      data_(&data),
      batch_size_(batch_size),
      full_pass_(full_pass),
      rng_(stream_seed),
      scratch_(obj.dim) {
  if (data.empty()) throw ConfigError("minibatch oracle over an empty dataset");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (data.dim != obj.dim)
    throw ConfigError("dataset and objective dimensions differ");
  indices_.resize(batch_size);
}

void MinibatchOracle::draw_indices(std::vector<std::size_t>& out) {
  out.resize(batch_size_);
  for (auto& i : out) i = rng_.index(data_->n());
}

void MinibatchOracle::gradient_at(const Vector& x,
                                  const std::vector<std::size_t>& indices,
                                  Vector& out) const {
  out.setZero(obj_->dim);
  Vector g(obj_->dim);
  for (std::size_t i : indices) {
    obj_->gradient(x, data_->samples[i], g);
    out += g;
  }
  out /= static_cast<double>(indices.size());
}

void MinibatchOracle::sample_gradient(const Vector& x, Vector& out) {
  if (full_pass_) {
    out = empirical_gradient(x, *obj_, *data_);
    return;
  }
  out.setZero(obj_->dim);
  for (std::size_t j = 0; j < batch_size_; ++j) {
    obj_->gradient(x, data_->samples[rng_.index(data_->n())], scratch_);
    out += scratch_;
  }
  out /= static_cast<double>(batch_size_);
}

Vector MinibatchOracle::sample_gradient(const Vector& x) {
  Vector out(obj_->dim);
  sample_gradient(x, out);
  return out;
}

nlohmann::json VarianceReport::to_json() const {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : per_probe) {
    probes.push_back({{"x", std::vector<double>(p.x.data(), p.x.data() + p.x.size())},
                      {"variance", p.variance},
                      {"ratio", p.ratio}});
  }
  return {{"delta_hat", delta_hat},
          {"trials", trials},
          {"batch_size", batch_size},
          {"per_probe", probes}};
}

namespace {

double mc_variance(MinibatchOracle& oracle, const Vector& x,
                   const Vector& exact, std::size_t trials) {
  Vector g(x.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    oracle.sample_gradient(x, g);
    acc += (g - exact).squaredNorm();
  }
  return acc / static_cast<double>(trials);
}

}  // namespace

VarianceReport estimate_delta(const ObjectiveSpec& obj, const Dataset& data,
                              std::size_t batch_size,
                              const std::vector<Vector>& probes,
                              std::size_t trials, std::uint64_t seed,
                              bool full_pass) {
  if (trials < 100) throw ConfigError("estimate_delta requires trials >= 100");
  const double M = obj.cert.M, B = obj.cert.B;
  if (M == 0.0 && B == 0.0)
    throw ConfigError("variance ratio undefined when M = B = 0");

  MinibatchOracle oracle(obj, data, batch_size,
                         derive_seed(seed, "variance", batch_size), full_pass);
  VarianceReport report;
  report.trials = trials;
  report.batch_size = batch_size;
  for (const auto& x : probes) {
    const double denom = 2.0 * (M * M * x.squaredNorm() + B * B);
    if (denom == 0.0) continue;
    const Vector exact = empirical_gradient(x, obj, data);
    VarianceProbe p;
    p.x = x;
    p.variance = mc_variance(oracle, x, exact, trials);
    p.ratio = p.variance / denom;
    report.delta_hat = std::max(report.delta_hat, p.ratio);
    report.per_probe.push_back(std::move(p));
  }
  return report;
}

std::vector<Vector> default_variance_probes(int dim, double radius,
                                            std::size_t per_shell,
                                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, "variance-probes"));
  std::vector<Vector> probes;
  probes.push_back(Vector::Zero(dim));
  for (double frac : {0.01, 0.1, 0.25, 0.5, 1.0})
    for (std::size_t k = 0; k < per_shell; ++k)
      probes.push_back(frac * radius * rng.unit_vector(dim));
  return probes;
}

nlohmann::json VarianceCurve::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < batch_sizes.size(); ++i)
    rows.push_back({{"batch_size", batch_sizes[i]}, {"variance", variances[i]}});
  nlohmann::json j = {{"curve", rows}};
  j["slope"] = slope ? nlohmann::json(*slope) : nlohmann::json(nullptr);
  return j;
}

VarianceCurve variance_scaling_curve(const ObjectiveSpec& obj,
                                     const Dataset& data, const Vector& x,
                                     const std::vector<std::size_t>& batch_sizes,
                                     std::size_t trials, std::uint64_t seed) {
  std::set<std::size_t> seen;
  for (std::size_t l : batch_sizes) {
    if (l == 0) throw ConfigError("batch sizes must be >= 1");
    if (!seen.insert(l).second) throw ConfigError("batch sizes must be distinct");
  }
  const Vector exact = empirical_gradient(x, obj, data);
  VarianceCurve curve;
  std::vector<double> lx, ly;
  for (std::size_t l : batch_sizes) {
    MinibatchOracle oracle(obj, data, l, derive_seed(seed, "variance-curve", l));
    const double v = mc_variance(oracle, x, exact, trials);
    curve.batch_sizes.push_back(l);
    curve.variances.push_back(v);
    if (v > 0.0) {
      lx.push_back(std::log(static_cast<double>(l)));
      ly.push_back(std::log(v));
    }
  }
  if (lx.size() >= 2) curve.slope = fit_slope(lx, ly);
  return curve;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw ConfigError("slope fit needs >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ConfigError("slope fit needs distinct abscissae");
  return sxy / sxx;
}

}  // namespace sghmc
