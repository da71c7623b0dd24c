#include "sghmc/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

namespace sghmc {

namespace {

nlohmann::json vec_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector json_vec(const nlohmann::json& j, int dim, const char* what) {
  const auto vals = j.get<std::vector<double>>();
  if (static_cast<int>(vals.size()) != dim)
    throw ConfigError(std::string(what) + " has wrong dimension");
  return Eigen::Map<const Vector>(vals.data(), dim);
}

// JSON has no infinity; accept the string "inf" for a noiseless run.
double read_positive_or_inf(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw ConfigError("expected a number or \"inf\", got " + s);
  }
  return j.get<double>();
}

nlohmann::json write_maybe_inf(double x) {
  if (std::isinf(x)) return "inf";
  return x;
}

void check_finite(const ChainState& s) {
  if (!s.x.allFinite() || !s.v.allFinite())
    throw DivergenceError("non-finite state at step " + std::to_string(s.step),
                          s.step);
}

bool consumes_minibatch(ChainKind k) { return k != ChainKind::exact_sghmc; }

void apply_update(ChainKind kind, ChainState& s, const SamplerConfig& cfg,
                  const Vector& grad, const Vector& xi) {
  if (kind == ChainKind::sgld)
    sgld_update(s, cfg, grad, xi);
  else
    sghmc_update(s, cfg, grad, xi);
}

Snapshot snap(const ChainState& s, double time) {
  return Snapshot{s.step, time, s.x, s.v};
}

}  // namespace

std::string to_string(ChainKind kind) {
  switch (kind) {
    case ChainKind::sgld: return "sgld";
    case ChainKind::sghmc: return "sghmc";
    case ChainKind::exact_sghmc: return "exact_sghmc";
  }
  return "unknown";
}

ChainKind chain_kind_from_string(const std::string& name) {
  if (name == "sgld") return ChainKind::sgld;
  if (name == "sghmc") return ChainKind::sghmc;
  if (name == "exact_sghmc" || name == "exact") return ChainKind::exact_sghmc;
  throw ConfigError("unknown chain kind: " + name);
}

InitialLaw InitialLaw::point(Vector x0, Vector v0) {
  InitialLaw law;
  law.kind = Kind::point;
  law.x0 = std::move(x0);
  law.v0 = std::move(v0);
  return law;
}

InitialLaw InitialLaw::gaussian(Vector mean_x, Vector mean_v, double scale) {
  if (!(scale > 0.0)) throw ConfigError("gaussian initial law needs scale > 0");
  InitialLaw law;
  law.kind = Kind::gaussian;
  law.x0 = std::move(mean_x);
  law.v0 = std::move(mean_v);
  law.scale = scale;
  return law;
}

nlohmann::json InitialLaw::to_json() const {
  nlohmann::json j = {{"kind", kind == Kind::point ? "point" : "gaussian"},
                      {"x0", vec_json(x0)},
                      {"v0", vec_json(v0)}};
  if (kind == Kind::gaussian) j["scale"] = scale;
  return j;
}

InitialLaw InitialLaw::from_json(const nlohmann::json& j, int dim) {
  const std::string kind = j.value("kind", "point");
  Vector x0 = j.contains("x0") ? json_vec(j["x0"], dim, "init.x0") : Vector::Zero(dim);
  Vector v0 = j.contains("v0") ? json_vec(j["v0"], dim, "init.v0") : Vector::Zero(dim);
  if (kind == "point") return point(std::move(x0), std::move(v0));
  if (kind == "gaussian")
    return gaussian(std::move(x0), std::move(v0), j.value("scale", 1.0));
  throw ConfigError("unknown initial law kind: " + kind);
}

void SamplerConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError("lambda must be finite and >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw ConfigError("gamma must be finite and >= 0");
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (init.x0.size() != dim || init.v0.size() != dim)
    throw ConfigError("initial law dimension differs from dim");
  if (init.kind == InitialLaw::Kind::gaussian && !(init.scale > 0.0))
    throw ConfigError("gaussian initial law needs scale > 0");
}

double SamplerConfig::noise_coefficient() const {
  return std::sqrt(2.0 * gamma * lambda / beta);
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"lambda", lambda},
          {"gamma", gamma},
          {"beta", write_maybe_inf(beta)},
          {"batch_size", batch_size},
          {"dim", dim},
          {"seed", seed},
          {"init", init.to_json()}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j, int dim) {
  SamplerConfig c;
  c.dim = dim;
  c.lambda = j.value("lambda", c.lambda);
  c.gamma = j.value("gamma", c.gamma);
  if (j.contains("beta")) c.beta = read_positive_or_inf(j["beta"]);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.init = j.contains("init")
               ? InitialLaw::from_json(j["init"], dim)
               : InitialLaw::point(Vector::Zero(dim), Vector::Zero(dim));
  return c;
}

ChainState initial_state(const SamplerConfig& cfg, std::uint64_t replica) {
  cfg.validate();
  ChainState s{cfg.init.x0, cfg.init.v0, 0,
               Rng(derive_seed(cfg.seed, "noise", replica))};
  if (cfg.init.kind == InitialLaw::Kind::gaussian) {
    Rng init(derive_seed(cfg.seed, "init", replica));
    s.x += cfg.init.scale * init.normal_vector(cfg.dim);
    s.v += cfg.init.scale * init.normal_vector(cfg.dim);
  }
  return s;
}

void sghmc_update(ChainState& s, const SamplerConfig& cfg, const Vector& grad,
                  const Vector& xi) {
  const double lam = cfg.lambda;
  const double c = cfg.noise_coefficient();
  s.x += lam * s.v;
  s.v -= lam * (cfg.gamma * s.v + grad);
  if (c != 0.0) s.v += c * xi;
  ++s.step;
  check_finite(s);
}

void sgld_update(ChainState& s, const SamplerConfig& cfg, const Vector& grad,
                 const Vector& xi) {
  const double c = std::sqrt(2.0 * cfg.lambda / cfg.beta);
  s.x -= cfg.lambda * grad;
  if (c != 0.0) s.x += c * xi;
  ++s.step;
  check_finite(s);
}

void sghmc_step(ChainState& s, const SamplerConfig& cfg, MinibatchOracle& oracle) {
  Vector g(s.x.size());
  oracle.sample_gradient(s.x, g);
  const Vector xi = s.rng.normal_vector(s.x.size());
  sghmc_update(s, cfg, g, xi);
}

void exact_sghmc_step(ChainState& s, const SamplerConfig& cfg,
                      const ObjectiveSpec& obj, const Dataset& data) {
  const Vector g = empirical_gradient(s.x, obj, data);
  const Vector xi = s.rng.normal_vector(s.x.size());
  sghmc_update(s, cfg, g, xi);
}

void sgld_step(ChainState& s, const SamplerConfig& cfg, MinibatchOracle& oracle) {
  Vector g(s.x.size());
  oracle.sample_gradient(s.x, g);
  const Vector xi = s.rng.normal_vector(s.x.size());
  sgld_update(s, cfg, g, xi);
}

void Trajectory::write_csv(std::ostream& os) const {
  const int d = config.dim;
  os << "step";
  for (int i = 0; i < d; ++i) os << ",x_" << i;
  for (int i = 0; i < d; ++i) os << ",v_" << i;
  os << '\n';
  char buf[32];
  for (const auto& s : states) {
    os << s.step;
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.x[i]);
      os << ',' << buf;
    }
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.v[i]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

std::string Trajectory::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

nlohmann::json Trajectory::manifest() const {
  return {{"kind", kind},
          {"replica", replica},
          {"stride", stride},
          {"states", states.size()},
          {"config", config.to_json()},
          {"seeds",
           {{"master", config.seed},
            {"noise", derive_seed(config.seed, "noise", replica)},
            {"minibatch", derive_seed(config.seed, "minibatch", replica)},
            {"init", derive_seed(config.seed, "init", replica)}}},
          {"diverged", diverged},
          {"divergence_step", diverged ? nlohmann::json(divergence_step)
                                       : nlohmann::json(nullptr)}};
}

Trajectory run_chain(ChainKind kind, const SamplerConfig& cfg,
                     const ObjectiveSpec& obj, const Dataset& data,
                     std::size_t steps, std::size_t thin,
                     std::uint64_t replica) {
  if (thin == 0) throw ConfigError("thin must be >= 1");
  if (obj.dim != cfg.dim) throw ConfigError("objective and sampler dimensions differ");
  ChainState s = initial_state(cfg, replica);
  std::optional<MinibatchOracle> oracle;
  if (consumes_minibatch(kind))
    oracle.emplace(obj, data, cfg.batch_size,
                   derive_seed(cfg.seed, "minibatch", replica));

  Trajectory traj;
  traj.kind = to_string(kind);
  traj.config = cfg;
  traj.replica = replica;
  traj.stride = thin;
  traj.states.reserve(steps / thin + 1);
  traj.states.push_back(snap(s, 0.0));

  Vector g(cfg.dim), xi(cfg.dim);
  for (std::size_t k = 1; k <= steps; ++k) {
    if (oracle)
      oracle->sample_gradient(s.x, g);
    else
      g = empirical_gradient(s.x, obj, data);
    s.rng.fill_normal(xi);
    apply_update(kind, s, cfg, g, xi);
    if (k % thin == 0) traj.states.push_back(snap(s, k * cfg.lambda));
  }
  return traj;
}

namespace {

// Shared Euler-Maruyama integrator; clock = 1 gives the underdamped SDE.
Trajectory integrate(const char* kind, double clock, const SamplerConfig& cfg,
                     const ObjectiveSpec& obj, const Dataset& data,
                     double t_end, double substep, std::size_t thin,
                     std::uint64_t replica) {
  if (!(t_end >= 0.0) || !std::isfinite(t_end))
    throw ConfigError("t_end must be finite and >= 0");
  if (!(substep > 0.0)) throw ConfigError("substep must be > 0");
  if (thin == 0) throw ConfigError("thin must be >= 1");
  if (obj.dim != cfg.dim) throw ConfigError("objective and sampler dimensions differ");

  ChainState s = initial_state(cfg, replica);
  Trajectory traj;
  traj.kind = kind;
  traj.config = cfg;
  traj.replica = replica;
  traj.stride = thin;
  traj.states.push_back(snap(s, 0.0));

  const auto n = static_cast<std::size_t>(std::llround(t_end / substep));
  const double h = clock * substep;
  const double c = std::sqrt(2.0 * cfg.gamma * h / cfg.beta);
  Vector xi(cfg.dim);
  for (std::size_t k = 1; k <= n; ++k) {
    const Vector g = empirical_gradient(s.x, obj, data);
    s.rng.fill_normal(xi);
    s.x += h * s.v;
    s.v -= h * (cfg.gamma * s.v + g);
    if (c != 0.0) s.v += c * xi;
    ++s.step;
    check_finite(s);
    if (k % thin == 0) traj.states.push_back(snap(s, k * substep));
  }
  return traj;
}

}  // namespace

Trajectory underdamped_integrate(const SamplerConfig& cfg,
                                 const ObjectiveSpec& obj, const Dataset& data,
                                 double t_end, double substep, std::size_t thin,
                                 std::uint64_t replica) {
  return integrate("underdamped", 1.0, cfg, obj, data, t_end, substep, thin,
                   replica);
}

Trajectory auxiliary_integrate(const SamplerConfig& cfg,
                               const ObjectiveSpec& obj, const Dataset& data,
                               double t_end, double substep, std::size_t thin,
                               std::uint64_t replica) {
  return integrate("auxiliary", cfg.lambda, cfg, obj, data, t_end, substep,
                   thin, replica);
}

CoupledRun coupled_run(const ChainSpec& a, const ChainSpec& b,
                       const ObjectiveSpec& obj, const Dataset& data,
                       std::size_t steps, std::size_t thin,
                       std::uint64_t replica) {
  if (thin == 0) throw ConfigError("thin must be >= 1");
  if (a.cfg.dim != b.cfg.dim) throw ConfigError("coupled chains differ in dimension");
  if (obj.dim != a.cfg.dim) throw ConfigError("objective and sampler dimensions differ");
  const int d = a.cfg.dim;

  // a_coarse: which chain takes the larger step.
  const bool a_coarse = a.cfg.lambda >= b.cfg.lambda;
  const double lam_c = a_coarse ? a.cfg.lambda : b.cfg.lambda;
  const double lam_f = a_coarse ? b.cfg.lambda : a.cfg.lambda;
  std::size_t r = 1;
  if (lam_c != lam_f) {
    if (!(lam_f > 0.0)) throw ConfigError("coupled step sizes must be positive");
    const double ratio = lam_c / lam_f;
    r = static_cast<std::size_t>(std::llround(ratio));
    if (r < 1 || std::abs(ratio - static_cast<double>(r)) > 1e-9 * ratio)
      throw ConfigError("coupled step sizes must have an integer ratio");
  }

  ChainState sa = initial_state(a.cfg, replica);
  ChainState sb = initial_state(b.cfg, replica);
  Rng noise(derive_seed(a.cfg.seed, "coupled-noise", replica));

  const bool share = r == 1 && consumes_minibatch(a.kind) &&
                     consumes_minibatch(b.kind) &&
                     a.cfg.batch_size == b.cfg.batch_size;
  std::optional<MinibatchOracle> oa, ob;
  if (consumes_minibatch(a.kind))
    oa.emplace(obj, data, a.cfg.batch_size,
               derive_seed(a.cfg.seed, "minibatch", replica));
  if (consumes_minibatch(b.kind))
    ob.emplace(obj, data, b.cfg.batch_size,
               derive_seed(b.cfg.seed, share ? "minibatch" : "minibatch-b", replica));

  std::vector<std::size_t> idx;
  auto gradient = [&](const ChainSpec& spec, std::optional<MinibatchOracle>& o,
                      const Vector& x, Vector& out) {
    if (spec.kind == ChainKind::exact_sghmc)
      out = empirical_gradient(x, obj, data);
    else if (share)
      o->gradient_at(x, idx, out);
    else
      o->sample_gradient(x, out);
  };

  CoupledRun run;
  for (auto* t : {&run.a, &run.b}) {
    const ChainSpec& spec = t == &run.a ? a : b;
    t->kind = to_string(spec.kind);
    t->config = spec.cfg;
    t->replica = replica;
    t->stride = thin * (t == &run.a ? (a_coarse ? 1 : r) : (a_coarse ? r : 1));
  }
  auto record = [&](std::uint64_t k) {
    const double time = k * lam_c;
    run.a.states.push_back(snap(sa, time));
    run.b.states.push_back(snap(sb, time));
    const Vector dx = sa.x - sb.x;
    const Vector dv = sa.v - sb.v;
    CoupledDistance cd;
    cd.step = k;
    cd.time = time;
    cd.dx = dx.norm();
    cd.dv = dv.norm();
    cd.dtwist = a.cfg.gamma > 0.0 ? (dx + dv / a.cfg.gamma).norm() : cd.dx;
    run.distances.push_back(cd);
  };
  record(0);

  ChainState& coarse = a_coarse ? sa : sb;
  ChainState& fine = a_coarse ? sb : sa;
  const ChainSpec& cspec = a_coarse ? a : b;
  const ChainSpec& fspec = a_coarse ? b : a;
  auto& co = a_coarse ? oa : ob;
  auto& fo = a_coarse ? ob : oa;

  Vector xi(d), agg(d), gc(d), gf(d);
  const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(r));
  for (std::size_t k = 1; k <= steps; ++k) {
    if (share) oa->draw_indices(idx);
    if (r == 1) {
      noise.fill_normal(xi);
      gradient(cspec, co, coarse.x, gc);
      gradient(fspec, fo, fine.x, gf);
      apply_update(cspec.kind, coarse, cspec.cfg, gc, xi);
      apply_update(fspec.kind, fine, fspec.cfg, gf, xi);
    } else {
      agg.setZero();
      gradient(cspec, co, coarse.x, gc);
      for (std::size_t j = 0; j < r; ++j) {
        noise.fill_normal(xi);
        agg += xi;
        gradient(fspec, fo, fine.x, gf);
        apply_update(fspec.kind, fine, fspec.cfg, gf, xi);
      }
      agg *= inv_sqrt_r;
      apply_update(cspec.kind, coarse, cspec.cfg, gc, agg);
    }
    if (k % thin == 0) record(k);
  }
  return run;
}

void for_each_replica(std::size_t count,
                      const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sghmc
