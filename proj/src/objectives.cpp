#include "sghmc/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sghmc/rng.hpp"

namespace sghmc {

namespace {

nlohmann::json to_array(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// log(cosh(s)) without overflow.
double log_cosh(double s) {
  const double a = std::abs(s);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double tolerance(double scale) { return 1e-10 * (1.0 + std::abs(scale)); }

}  // namespace

void SmoothnessCertificate::validate() const {
  const bool finite = std::isfinite(A0) && std::isfinite(B) &&
                      std::isfinite(M) && std::isfinite(m) && std::isfinite(b);
  if (!finite) throw ConfigError("certificate has non-finite fields");
  if (!(M > 0.0) || !(m > 0.0))
    throw ConfigError("certificate requires M > 0 and m > 0");
  if (A0 < 0.0 || B < 0.0 || b < 0.0)
    throw ConfigError("certificate requires A0, B, b >= 0");
  if (m > M) throw ConfigError("certificate requires m <= M");
}

nlohmann::json SmoothnessCertificate::to_json() const {
  return {{"A0", A0}, {"B", B}, {"M", M}, {"m", m}, {"b", b}};
}

nlohmann::json DatasetSpec::to_json() const {
  return {{"generator", generator}, {"n", n},        {"dim", dim},
          {"seed", seed},           {"location", location}, {"scale", scale}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.generator = j.value("generator", s.generator);
  s.n = j.value("n", s.n);
  s.dim = j.value("dim", s.dim);
  s.seed = j.value("seed", s.seed);
  s.location = j.value("location", s.location);
  s.scale = j.value("scale", s.scale);
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.n == 0) throw ConfigError("dataset size must be positive");
  if (spec.dim < 1) throw ConfigError("dataset dimension must be positive");
  if (spec.generator != "gaussian" && spec.generator != "mixture")
    throw ConfigError("unknown dataset generator '" + spec.generator + "'");

  Rng rng(derive_seed(spec.seed, "dataset:" + spec.generator));
  Dataset data;
  data.generator_id = spec.generator;
  data.seed = spec.seed;
  data.dim = spec.dim;
  data.location = spec.location;
  data.scale = spec.scale;
  data.samples.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double center = spec.location;
    if (spec.generator == "mixture" && rng.uniform() < 0.5) center = -center;
    Sample z(spec.dim);
    for (int k = 0; k < spec.dim; ++k) z[k] = center + spec.scale * rng.normal();
    data.samples.push_back(std::move(z));
  }
  return data;
}

Dataset dataset_from_samples(std::vector<Sample> samples) {
  if (samples.empty()) throw ConfigError("dataset must be nonempty");
  Dataset data;
  data.dim = static_cast<int>(samples.front().size());
  for (const auto& z : samples)
    if (z.size() != data.dim) throw ConfigError("samples differ in dimension");
  data.samples = std::move(samples);
  data.generator_id = "fixed";
  return data;
}

double max_sample_norm(const Dataset& data) {
  double z = 0.0;
  for (const auto& s : data.samples) z = std::max(z, s.norm());
  return z;
}

double empirical_risk(const Vector& x, const ObjectiveSpec& obj,
                      const Dataset& data) {
  if (data.empty()) throw ConfigError("empirical risk over an empty dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double v = obj.value(x, data.samples[i]);
    if (!std::isfinite(v))
      throw EvaluationError(
          "non-finite objective value at sample " + std::to_string(i), i);
    sum += v;
  }
  return sum / static_cast<double>(data.n());
}

Vector empirical_gradient(const Vector& x, const ObjectiveSpec& obj,
                          const Dataset& data) {
  if (data.empty())
    throw ConfigError("empirical gradient over an empty dataset");
  Vector sum = Vector::Zero(obj.dim);
  Vector g(obj.dim);
  for (std::size_t i = 0; i < data.n(); ++i) {
    obj.gradient(x, data.samples[i], g);
    if (!g.allFinite())
      throw EvaluationError(
          "non-finite gradient at sample " + std::to_string(i), i);
    sum += g;
  }
  return sum / static_cast<double>(data.n());
}

ObjectiveSpec make_quadratic(int dim, double m0, double shift,
                             const Dataset& data) {
  if (!(m0 > 0.0)) throw ConfigError("quadratic requires m0 > 0");
  ObjectiveSpec obj;
  obj.name = "quadratic";
  obj.dim = dim;
  obj.params = {{"m0", m0}, {"shift", shift}};
  obj.value = [m0, shift](const Vector& x, const Sample& z) {
    return 0.5 * m0 * (x - shift * z).squaredNorm();
  };
  obj.gradient = [m0, shift](const Vector& x, const Sample& z, Vector& out) {
    out = m0 * (x - shift * z);
  };

  const double zmax = std::abs(shift) * max_sample_norm(data);
  obj.cert.M = m0;
  obj.cert.A0 = 0.5 * m0 * zmax * zmax;
  obj.cert.B = m0 * zmax;
  if (zmax == 0.0) {
    obj.cert.m = m0;
    obj.cert.b = 0.0;
  } else {
    // m0<x, x - s z> >= m0|x|^2 - m0|x||s z| >= (m0/2)|x|^2 - (m0/2)|s z|^2
    obj.cert.m = 0.5 * m0;
    obj.cert.b = 0.5 * m0 * zmax * zmax;
  }
  obj.cert.validate();
  return obj;
}

namespace {

struct WellProfile {
  double a, ua, dua, d2ua;

  explicit WellProfile(double tail_start)
      : a(tail_start),
        ua(tail_start * tail_start * tail_start * tail_start / 4.0 -
           tail_start * tail_start / 2.0),
        dua(tail_start * tail_start * tail_start - tail_start),
        d2ua(3.0 * tail_start * tail_start - 1.0) {}

  double value(double t) const {
    const double s = std::abs(t) - a;
    if (s <= 0.0) return t * t * t * t / 4.0 - t * t / 2.0;
    return ua + dua * s + 0.5 * d2ua * s * s;
  }
  double slope(double t) const {
    const double s = std::abs(t) - a;
    if (s <= 0.0) return t * t * t - t;
    return std::copysign(dua + d2ua * s, t);
  }
  // Smallest b_u with t u'(t) >= t^2 - b_u for all t.
  double dissipativity_offset() const {
    double b = 1.0;  // interior: max of 2t^2 - t^4 at t^2 = 1
    // exterior: (1 - u''(a)) t^2 + (u''(a) a - u'(a)) t on t >= a
    const double c2 = 1.0 - d2ua;
    const double c1 = d2ua * a - dua;
    double t = std::max(a, -c1 / (2.0 * c2));
    b = std::max(b, c2 * t * t + c1 * t);
    return b;
  }
};

}  // namespace

ObjectiveSpec make_double_well(int dim, double kappa, double tail_start,
                               const Dataset& data) {
  if (!(kappa >= 0.0)) throw ConfigError("double_well requires kappa >= 0");
  if (!(tail_start >= 1.0))
    throw ConfigError("double_well requires tail_start >= 1");
  const WellProfile well(tail_start);
  const double offset = dim / 4.0;

  ObjectiveSpec obj;
  obj.name = "double_well";
  obj.dim = dim;
  obj.params = {{"kappa", kappa}, {"tail_start", tail_start}};
  obj.value = [well, kappa, offset](const Vector& x, const Sample& z) {
    double s = offset + 0.5 * kappa * (x - z).squaredNorm();
    for (Eigen::Index i = 0; i < x.size(); ++i) s += well.value(x[i]);
    return s;
  };
  obj.gradient = [well, kappa](const Vector& x, const Sample& z, Vector& out) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      out[i] = well.slope(x[i]) + kappa * (x[i] - z[i]);
  };

  const double zmax = max_sample_norm(data);
  obj.cert.M = std::max(well.d2ua + kappa, std::abs(kappa - 1.0));
  obj.cert.m = 1.0 + 0.5 * kappa;
  obj.cert.b = dim * well.dissipativity_offset() + 0.5 * kappa * zmax * zmax;
  obj.cert.A0 = offset + 0.5 * kappa * zmax * zmax;
  obj.cert.B = kappa * zmax;
  obj.cert.validate();
  return obj;
}

ObjectiveSpec make_gaussian_mixture(int dim, double ridge, double offset,
                                    const Dataset& data) {
  if (!(ridge >= 0.0)) throw ConfigError("gaussian_mixture requires ridge >= 0");
  if (!(offset >= 0.0))
    throw ConfigError("gaussian_mixture requires offset >= 0");
  const double curv = 1.0 + 2.0 * ridge;

  ObjectiveSpec obj;
  obj.name = "gaussian_mixture";
  obj.dim = dim;
  obj.params = {{"ridge", ridge}, {"offset", offset}};
  // -log(cosh-mixture) = |x|^2/2 + |z|^2/2 - log cosh <x,z>
  obj.value = [curv, offset](const Vector& x, const Sample& z) {
    return 0.5 * curv * x.squaredNorm() + 0.5 * z.squaredNorm() -
           log_cosh(x.dot(z)) + offset;
  };
  obj.gradient = [curv](const Vector& x, const Sample& z, Vector& out) {
    out = curv * x - std::tanh(x.dot(z)) * z;
  };

  const double zmax = max_sample_norm(data);
  const double z2 = zmax * zmax;
  // Hessian = curv I - sech^2(<x,z>) z z^T has spectrum in [curv - |z|^2, curv]
  obj.cert.M = std::max(curv, std::abs(curv - z2));
  obj.cert.m = 0.5 * curv;
  obj.cert.b = z2 / (2.0 * curv);
  obj.cert.A0 = 0.5 * z2 + offset;
  obj.cert.B = 0.0;
  obj.cert.validate();
  return obj;
}

ObjectiveSpec make_objective(const std::string& name,
                             const nlohmann::json& params,
                             const Dataset& data) {
  const int dim = data.dim;
  const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;
  if (name == "quadratic")
    return make_quadratic(dim, p.value("m0", 1.0), p.value("shift", 0.0), data);
  if (name == "double_well")
    return make_double_well(dim, p.value("kappa", 0.1),
                            p.value("tail_start", 1.5), data);
  if (name == "gaussian_mixture")
    return make_gaussian_mixture(dim, p.value("ridge", 0.05),
                                 p.value("offset", 0.0), data);
  throw ConfigError("unknown objective '" + name + "'");
}

std::vector<std::string> builtin_objective_names() {
  return {"quadratic", "double_well", "gaussian_mixture"};
}

bool AuditReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const AuditCheck& c) { return c.pass; });
}

const AuditCheck& AuditReport::check(const std::string& assumption) const {
  for (const auto& c : checks)
    if (c.assumption == assumption) return c;
  throw ConfigError("audit has no check named '" + assumption + "'");
}

nlohmann::json AuditReport::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& c : checks) {
    entries.push_back({{"assumption", c.assumption},
                       {"pass", c.pass},
                       {"margin", c.margin},
                       {"witness", c.witness},
                       {"note", c.note}});
  }
  return {{"probes", probes}, {"radius", radius}, {"checks", entries}};
}

double default_probe_radius(const SmoothnessCertificate& cert) {
  return 10.0 * std::max(1.0, std::sqrt(cert.b / cert.m));
}

AuditReport audit_assumptions(const ObjectiveSpec& obj, const Dataset& data,
                              std::size_t probes, double radius,
                              std::uint64_t seed,
                              std::size_t lipschitz_pairs) {
  if (probes < 2) throw ConfigError("audit requires at least 2 probes");
  if (data.empty()) throw ConfigError("audit requires a nonempty dataset");
  const auto& cert = obj.cert;
  Rng rng(derive_seed(seed, "audit"));

  std::vector<Vector> points;
  points.reserve(probes);
  points.push_back(Vector::Zero(obj.dim));
  while (points.size() < probes) points.push_back(rng.in_ball(obj.dim, radius));

  AuditReport report;
  report.probes = probes;
  report.radius = radius;

  // non-negativity and dissipativity at every (probe, sample)
  AuditCheck nonneg{"nonnegativity", true, std::numeric_limits<double>::infinity(),
                    nullptr, "min f(x,z) over probes"};
  AuditCheck dissip{"dissipativity", true,
                    std::numeric_limits<double>::infinity(), nullptr,
                    "min <x,grad f> - m|x|^2 + b over probes"};
  Vector g(obj.dim);
  for (const auto& x : points) {
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto& z = data.samples[i];
      const double fv = obj.value(x, z);
      if (fv < nonneg.margin) {
        nonneg.margin = fv;
        nonneg.witness = {{"x", to_array(x)}, {"sample", i}, {"f", fv}};
      }
      obj.gradient(x, z, g);
      const double xx = x.squaredNorm();
      const double slack = x.dot(g) - cert.m * xx + cert.b;
      if (slack < dissip.margin) {
        dissip.margin = slack;
        dissip.witness = {{"x", to_array(x)}, {"sample", i}, {"slack", slack}};
      }
    }
  }
  nonneg.pass = nonneg.margin >= -tolerance(0.0);
  {
    // rounding in <x, grad f> - m|x|^2 scales with m|x|^2
    const double scale = cert.m * radius * radius;
    dissip.pass = dissip.margin >= -tolerance(scale);
  }

  // Lipschitz ratio over random pairs: half independent, half local.
  AuditCheck lip{"gradient_lipschitz", true, 0.0, nullptr,
                 "empirical max ratio is a lower bound on the true constant; "
                 "pass means no violation found"};
  double worst = 0.0;
  Vector g1(obj.dim), g2(obj.dim);
  for (std::size_t k = 0; k < lipschitz_pairs; ++k) {
    Vector x1 = rng.in_ball(obj.dim, radius);
    Vector x2 = (k % 2 == 0) ? rng.in_ball(obj.dim, radius)
                             : Vector(x1 + 1e-3 * radius * rng.unit_vector(obj.dim));
    const double dx = (x1 - x2).norm();
    if (dx == 0.0) continue;
    const std::size_t i = rng.index(data.n());
    obj.gradient(x1, data.samples[i], g1);
    obj.gradient(x2, data.samples[i], g2);
    const double ratio = (g1 - g2).norm() / dx;
    if (ratio > worst) {
      worst = ratio;
      lip.witness = {{"x1", to_array(x1)},
                     {"x2", to_array(x2)},
                     {"sample", i},
                     {"ratio", ratio}};
    }
  }
  lip.margin = cert.M - worst;
  lip.pass = worst <= cert.M * (1.0 + 1e-9);

  AuditCheck origin{"origin_bounds", true, std::numeric_limits<double>::infinity(),
                    nullptr, "min of A0 - |f(0,z)| and B - |grad f(0,z)|"};
  const Vector zero = Vector::Zero(obj.dim);
  for (std::size_t i = 0; i < data.n(); ++i) {
    obj.gradient(zero, data.samples[i], g);
    const double sa = cert.A0 - std::abs(obj.value(zero, data.samples[i]));
    const double sb = cert.B - g.norm();
    const double s = std::min(sa, sb);
    if (s < origin.margin) {
      origin.margin = s;
      origin.witness = {{"sample", i}, {"A0_slack", sa}, {"B_slack", sb}};
    }
  }
  origin.pass = origin.margin >= -tolerance(std::max(cert.A0, cert.B));

  report.checks = {nonneg, lip, dissip, origin};
  return report;
}

QuadGrowthSandwich quad_growth_sandwich(const ObjectiveSpec& obj,
                                        const Vector& x, const Sample& z) {
  const auto& c = obj.cert;
  const double r = x.norm();
  return {c.m / 3.0 * r * r - 0.5 * c.b * std::log(3.0), obj.value(x, z),
          0.5 * c.M * r * r + c.B * r + c.A0};
}

}  // namespace sghmc
