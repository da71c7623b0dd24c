#include "sghmc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#ifndef SGHMC_VERSION
#define SGHMC_VERSION "0.0.0"
#endif

namespace sghmc {

namespace fs = std::filesystem;

const char* software_version() { return SGHMC_VERSION; }

namespace {

nlohmann::json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

template <class T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
}

const std::set<std::string> kKinds = {"audit",       "constants",  "sample",
                                      "couple",      "rate-study", "gibbs-check",
                                      "risk-bound",  "validate"};

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "kind",   "objective", "dataset", "sampler", "chain",      "steps", "thin",
      "replicas", "couple",  "theory",  "audit",   "rate_study", "gibbs", "output",
      "strict"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");

  ExperimentConfig c;
  c.kind = j.value("kind", c.kind);
  if (j.contains("objective")) {
    const auto& o = j["objective"];
    if (o.is_string()) {
      c.objective = o.get<std::string>();
    } else {
      c.objective = o.value("name", c.objective);
      if (o.contains("params")) c.objective_params = o["params"];
    }
  }
  if (j.contains("dataset")) c.dataset = DatasetSpec::from_json(j["dataset"]);
  const int dim = c.dataset.dim;
  const nlohmann::json sj = j.value("sampler", nlohmann::json::object());
  c.sampler = SamplerConfig::from_json(sj, dim);
  c.chain = chain_kind_from_string(j.value("chain", std::string("sghmc")));
  c.steps = j.value("steps", c.steps);
  c.thin = j.value("thin", c.thin);
  c.replicas = j.value("replicas", c.replicas);

  nlohmann::json sb = sj;
  c.chain_b = c.chain;
  if (j.contains("couple")) {
    const auto& cp = j["couple"];
    if (cp.contains("chain")) c.chain_b = chain_kind_from_string(cp["chain"].get<std::string>());
    if (cp.contains("sampler")) sb.merge_patch(cp["sampler"]);
  }
  c.sampler_b = SamplerConfig::from_json(sb, dim);

  if (j.contains("theory")) {
    const auto& t = j["theory"];
    c.p = t.value("p", c.p);
    c.q = t.value("q", c.q);
    read_opt(t, "delta", c.delta);
    read_opt(t, "lambda_star", c.lambda_star);
    read_opt(t, "c_LS", c.c_LS);
    read_opt(t, "sigma", c.sigma);
    c.epsilon = t.value("epsilon", c.epsilon);
    if (t.contains("h_inner_limit"))
      c.h_inner_limit = parse_inner_limit(t["h_inner_limit"].get<std::string>());
    c.pilot_steps = t.value("pilot_steps", c.pilot_steps);
    c.pilot_replicas = t.value("pilot_replicas", c.pilot_replicas);
    if (t.contains("scaling_betas")) c.scaling_betas = t["scaling_betas"].get<std::vector<double>>();
    if (t.contains("scaling_dims")) c.scaling_dims = t["scaling_dims"].get<std::vector<int>>();
  }
  if (j.contains("audit")) {
    const auto& a = j["audit"];
    c.probes = a.value("probes", c.probes);
    read_opt(a, "radius", c.radius);
    c.lipschitz_pairs = a.value("lipschitz_pairs", c.lipschitz_pairs);
    c.variance_trials = a.value("variance_trials", c.variance_trials);
  }
  if (j.contains("rate_study")) {
    const auto& r = j["rate_study"];
    if (r.contains("lambdas")) c.lambdas = r["lambdas"].get<std::vector<double>>();
    c.t_end = r.value("t_end", c.t_end);
    read_opt(r, "lambda_ref", c.lambda_ref);
  }
  if (j.contains("gibbs")) read_opt(j["gibbs"], "burn_in", c.burn_in);
  c.output = j.value("output", c.output);
  c.strict = j.value("strict", c.strict);
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json sb = sampler_b.to_json();
  sb.erase("dim");
  nlohmann::json s = sampler.to_json();
  s.erase("dim");
  return {{"kind", kind},
          {"objective", {{"name", objective}, {"params", objective_params}}},
          {"dataset", dataset.to_json()},
          {"sampler", s},
          {"chain", to_string(chain)},
          {"steps", steps},
          {"thin", thin},
          {"replicas", replicas},
          {"couple", {{"chain", to_string(chain_b)}, {"sampler", sb}}},
          {"theory",
           {{"p", p},
            {"q", q},
            {"delta", opt(delta)},
            {"lambda_star", opt(lambda_star)},
            {"c_LS", opt(c_LS)},
            {"sigma", opt(sigma)},
            {"epsilon", epsilon},
            {"h_inner_limit", to_string(h_inner_limit)},
            {"pilot_steps", pilot_steps},
            {"pilot_replicas", pilot_replicas},
            {"scaling_betas", scaling_betas},
            {"scaling_dims", scaling_dims}}},
          {"audit",
           {{"probes", probes},
            {"radius", opt(radius)},
            {"lipschitz_pairs", lipschitz_pairs},
            {"variance_trials", variance_trials}}},
          {"rate_study", {{"lambdas", lambdas}, {"t_end", t_end}, {"lambda_ref", opt(lambda_ref)}}},
          {"gibbs", {{"burn_in", opt(burn_in)}}},
          {"output", output},
          {"strict", strict}};
}

nlohmann::json Finding::to_json() const {
  return {{"code", code}, {"severity", severity}, {"message", message}};
}

bool has_errors(const std::vector<Finding>& findings) {
  return std::any_of(findings.begin(), findings.end(),
                     [](const Finding& f) { return f.severity == "error"; });
}

Problem build_problem(const ExperimentConfig& cfg) {
  Problem p;
  p.data = generate_dataset(cfg.dataset);
  p.obj = make_objective(cfg.objective, cfg.objective_params, p.data);
  return p;
}

namespace {

DriftConstants verified_drift(const ExperimentConfig& cfg, const Problem& prob,
                              std::size_t probes) {
  const auto& s = cfg.sampler;
  return derive_drift_constants(
      prob.obj.cert, s.gamma, s.beta, prob.obj, prob.data,
      ball_probes(prob.obj.dim, probes, default_probe_radius(prob.obj.cert), s.seed));
}

}  // namespace

std::vector<Finding> validate_config(const ExperimentConfig& cfg) {
  std::vector<Finding> out;
  const char* soft = cfg.strict ? "error" : "warning";
  if (!kKinds.count(cfg.kind))
    out.push_back({"unknown_kind", "error", "unknown experiment kind '" + cfg.kind + "'"});
  Problem prob;
  try {
    prob = build_problem(cfg);
  } catch (const std::exception& e) {
    out.push_back({"objective", "error", e.what()});
    return out;
  }
  try {
    cfg.sampler.validate();
    if (cfg.kind == "couple") cfg.sampler_b.validate();
  } catch (const std::exception& e) {
    out.push_back({"sampler", "error", e.what()});
    return out;
  }
  if (!(cfg.sampler.lambda > 0.0))
    out.push_back({"step_size", "error", "lambda must be > 0"});
  if (!(cfg.sampler.gamma > 0.0)) out.push_back({"friction", "error", "gamma must be > 0"});
  if (cfg.thin == 0) out.push_back({"thin", "error", "thin must be >= 1"});
  if (cfg.replicas == 0) out.push_back({"replicas", "error", "replicas must be >= 1"});

  // p/q relation
  {
    std::ostringstream msg;
    msg << "p=" << cfg.p << ", q=" << cfg.q;
    const bool ok = cfg.q >= 1 && cfg.p > 1.0 && cfg.p <= 2.0 &&
                    std::abs(1.0 / cfg.p + 1.0 / (2.0 * cfg.q) - 1.0) <= 1e-12;
    if (ok)
      out.push_back({"pq_relation", "info", msg.str() + " satisfies 1/p + 1/(2q) = 1"});
    else
      out.push_back({"pq_relation", "error", msg.str() + " violates 1/p + 1/(2q) = 1 with integer q >= 1"});
  }

  if (std::isfinite(cfg.sampler.beta) && cfg.sampler.gamma > 0.0) {
    try {
      const DriftConstants dc = verified_drift(cfg, prob, 200);
      const MomentBoundConstants mb = moment_bound_constants(
          dc, prob.obj.cert, cfg.sampler.gamma, cfg.sampler.beta, prob.obj.dim,
          cfg.delta.value_or(0.0), 0.0);
      std::ostringstream msg;
      msg.precision(6);
      msg << "lambda=" << cfg.sampler.lambda << ", lambda_cap=" << mb.lambda_cap;
      if (cfg.sampler.lambda > mb.lambda_cap)
        out.push_back({"inadmissible_step", soft, msg.str() + " exceeds the cap"});
      else
        out.push_back({"admissible_step", "info", msg.str()});
    } catch (const std::exception& e) {
      out.push_back({"drift_certification", "error", e.what()});
    }
    const InitAdmissibility ia = initial_law_admissible(cfg.sampler.init, prob.obj.cert,
                                                        cfg.sampler.gamma, cfg.sampler.beta);
    out.push_back({"initial_law", ia.admissible ? "info" : soft, ia.note});
  } else {
    out.push_back({"noiseless", "info", "beta = inf or gamma = 0: theory checks skipped"});
  }
  return out;
}

// ---------------------------------------------------------------- theory

nlohmann::json TheoryBundle::to_json() const {
  nlohmann::json j = {{"drift", drift.to_json()},
                      {"contraction", contraction.to_json()},
                      {"moment", moment.to_json()},
                      {"proof", proof.to_json()},
                      {"delta", delta}};
  // Both inner-limit readings are reported; the configured one drives rho.
  nlohmann::json hj = {{"inner_limit", to_string(h_inner_limit)}};
  for (InnerLimit l : {InnerLimit::running, InnerLimit::printed}) {
    const HFunction h(contraction, 4096, l);
    nlohmann::json e = {{"validity_radius", num(h.validity_radius())},
                        {"g_at_R_1", num(h.g(contraction.R_1))}};
    try {
      e["h_at_R_1"] = num(h(contraction.R_1));
    } catch (const NumericalError&) {
      e["h_at_R_1"] = "negative";
    }
    hj[to_string(l)] = e;
  }
  j["h"] = hj;
  j["pilot"] = pilot ? pilot->to_json() : nlohmann::json(nullptr);
  return j;
}

TheoryBundle compute_theory(const ExperimentConfig& cfg, const Problem& prob) {
  const auto& s = cfg.sampler;
  TheoryBundle tb;
  tb.drift = verified_drift(cfg, prob, 1000);
  tb.contraction = contraction_constants(tb.drift, prob.obj.cert, s.gamma, s.beta,
                                         prob.obj.dim, cfg.p);
  tb.lyap = LyapunovParams{s.beta, s.gamma, tb.drift.lambda_c, &prob.obj, &prob.data};
  tb.h_inner_limit = cfg.h_inner_limit;
  if (cfg.delta) {
    tb.delta = *cfg.delta;
  } else if (cfg.chain == ChainKind::exact_sghmc) {
    tb.delta = 0.0;
  } else {
    const double radius = default_probe_radius(prob.obj.cert);
    tb.delta = estimate_delta(prob.obj, prob.data, s.batch_size,
                              default_variance_probes(prob.obj.dim, radius, 4, s.seed),
                              cfg.variance_trials, s.seed)
                   .delta_hat;
  }
  const double mu0 = mu0_lyapunov_integral(tb.lyap, s.init, 4096, s.seed);
  tb.moment = moment_bound_constants(tb.drift, prob.obj.cert, s.gamma, s.beta,
                                     prob.obj.dim, tb.delta, mu0);
  if (cfg.pilot_steps > 0)
    tb.pilot = pilot_statistics(prob.obj, prob.data, s, tb.lyap, cfg.pilot_steps,
                                cfg.pilot_replicas, std::max<std::size_t>(1, cfg.pilot_steps / 200));
  tb.proof = proof_constants(prob.obj.cert, tb.moment, s.gamma, s.beta, tb.delta,
                             tb.contraction, tb.pilot);
  return tb;
}

// ---------------------------------------------------------------- gibbs

std::pair<double, double> discrete_stationary_variance(double lambda, double gamma,
                                                       double beta, double m0) {
  const double l = lambda, g = gamma, m = m0;
  const double bracket = 2.0 * g - l * g * g - 2.0 * l * m + 1.5 * l * l * m * g -
                         0.5 * l * l * l * m * m;
  const double r = 2.0 * g / beta / bracket;
  const double p = r * (1.0 - 0.5 * l * g + 0.5 * l * l * m) / m;
  return {p, r};
}

nlohmann::json GibbsReport::to_json() const {
  return {{"x_var", x_var},
          {"v_var", v_var},
          {"x_target", x_target},
          {"v_target", v_target},
          {"max_rel_error", max_rel_error},
          {"tolerance", tolerance},
          {"discrete_oracle",
           {{"lambda", {{"x", oracle_lambda.first}, {"v", oracle_lambda.second}}},
            {"half_lambda", {{"x", oracle_half.first}, {"v", oracle_half.second}}}}},
          {"coupled_variance_difference", {{"x", coupled_diff_x}, {"v", coupled_diff_v}}},
          {"variances_pass", variances_pass},
          {"bias_reduced", bias_reduced},
          {"pass", pass()}};
}

GibbsReport gibbs_check(const ObjectiveSpec& obj, const Dataset& data,
                        const SamplerConfig& cfg, std::size_t steps,
                        std::size_t burn_in, std::size_t replicas,
                        std::size_t thin) {
  if (obj.name != "quadratic")
    throw ConfigError("gibbs check needs the quadratic objective (analytic Gibbs law)");
  if (burn_in >= steps) throw ConfigError("burn-in must be shorter than the run");
  const double m0 = obj.params.at("m0").get<double>();
  const int d = cfg.dim;

  // pooled tail moments
  std::vector<Trajectory> runs(replicas);
  for_each_replica(replicas, [&](std::size_t r) {
    runs[r] = run_chain(ChainKind::exact_sghmc, cfg, obj, data, steps, thin, r);
  });
  Vector sx = Vector::Zero(d), sxx = Vector::Zero(d), sv = Vector::Zero(d),
         svv = Vector::Zero(d);
  double count = 0.0;
  for (const auto& t : runs)
    for (const auto& s : t.states) {
      if (s.step <= burn_in) continue;
      sx += s.x;
      sxx += s.x.cwiseProduct(s.x);
      sv += s.v;
      svv += s.v.cwiseProduct(s.v);
      count += 1.0;
    }
  GibbsReport rep;
  rep.x_target = 1.0 / (cfg.beta * m0);
  rep.v_target = 1.0 / cfg.beta;
  for (int i = 0; i < d; ++i) {
    const double mx = sx[i] / count, mv = sv[i] / count;
    rep.x_var.push_back(sxx[i] / count - mx * mx);
    rep.v_var.push_back(svv[i] / count - mv * mv);
    rep.max_rel_error = std::max({rep.max_rel_error,
                                  std::abs(rep.x_var.back() / rep.x_target - 1.0),
                                  std::abs(rep.v_var.back() / rep.v_target - 1.0)});
  }
  rep.variances_pass = rep.max_rel_error <= rep.tolerance;

  rep.oracle_lambda = discrete_stationary_variance(cfg.lambda, cfg.gamma, cfg.beta, m0);
  rep.oracle_half = discrete_stationary_variance(0.5 * cfg.lambda, cfg.gamma, cfg.beta, m0);

  // Coupled chains at lambda and lambda/2 share noise, so the difference of
  // their tail second moments has a small Monte Carlo error.
  SamplerConfig half = cfg;
  half.lambda = 0.5 * cfg.lambda;
  std::vector<double> dx(replicas, 0.0), dv(replicas, 0.0), cnt(replicas, 0.0);
  for_each_replica(replicas, [&](std::size_t r) {
    const CoupledRun run = coupled_run({ChainKind::exact_sghmc, cfg},
                                       {ChainKind::exact_sghmc, half}, obj, data, steps,
                                       thin, r);
    for (std::size_t i = 0; i < run.a.states.size(); ++i) {
      if (run.a.states[i].step <= burn_in) continue;
      dx[r] += run.a.states[i].x.squaredNorm() - run.b.states[i].x.squaredNorm();
      dv[r] += run.a.states[i].v.squaredNorm() - run.b.states[i].v.squaredNorm();
      cnt[r] += 1.0;
    }
  });
  double tx = 0.0, tv = 0.0, tc = 0.0;
  for (std::size_t r = 0; r < replicas; ++r) {
    tx += dx[r];
    tv += dv[r];
    tc += cnt[r];
  }
  rep.coupled_diff_x = tx / tc / d;
  rep.coupled_diff_v = tv / tc / d;

  const double bias_x = std::abs(rep.oracle_lambda.first - rep.x_target);
  const double bias_xh = std::abs(rep.oracle_half.first - rep.x_target);
  const double bias_v = std::abs(rep.oracle_lambda.second - rep.v_target);
  const double bias_vh = std::abs(rep.oracle_half.second - rep.v_target);
  const double ox = rep.oracle_lambda.first - rep.oracle_half.first;
  const double ov = rep.oracle_lambda.second - rep.oracle_half.second;
  rep.bias_reduced = bias_xh < bias_x && bias_vh < bias_v &&
                     rep.coupled_diff_x * ox > 0.0 && rep.coupled_diff_v * ov > 0.0;
  return rep;
}

// ---------------------------------------------------------------- rate study

nlohmann::json RateStudyResult::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& p : points)
    rows.push_back({{"lambda", p.lambda}, {"steps", p.steps}, {"rms", num(p.rms)},
                    {"diverged", p.diverged}});
  return {{"points", rows},
          {"lambda_ref", lambda_ref},
          {"t_end", t_end},
          {"slope", opt(slope)},
          {"monotone", monotone}};
}

void RateStudyResult::write_csv(std::ostream& os) const {
  os << "lambda,steps,rms,diverged\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%d\n", p.lambda, p.steps, p.rms,
                  p.diverged ? 1 : 0);
    os << buf;
  }
}

RateStudyResult rate_study(const ObjectiveSpec& obj, const Dataset& data,
                           const SamplerConfig& base, ChainKind kind,
                           const std::vector<double>& lambdas, double lambda_ref,
                           double t_end, std::size_t replicas) {
  if (lambdas.empty()) throw ConfigError("rate study needs at least one step size");
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] < lambdas[i - 1])) throw ConfigError("step-size grid must be decreasing");
  if (!(lambda_ref > 0.0)) throw ConfigError("reference step size must be > 0");
  if (!(t_end > 0.0)) throw ConfigError("t_end must be > 0");

  RateStudyResult res;
  res.lambda_ref = lambda_ref;
  res.t_end = t_end;
  SamplerConfig ref = base;
  ref.lambda = lambda_ref;
  for (double lam : lambdas) {
    RatePoint pt;
    pt.lambda = lam;
    pt.steps = static_cast<std::size_t>(std::llround(t_end / lam));
    SamplerConfig c = base;
    c.lambda = lam;
    std::vector<double> sq(replicas, 0.0);
    std::vector<char> bad(replicas, 0);
    for_each_replica(replicas, [&](std::size_t r) {
      try {
        const CoupledRun run = coupled_run({kind, c}, {ChainKind::exact_sghmc, ref}, obj,
                                           data, pt.steps, pt.steps, r);
        const auto& last = run.distances.back();
        sq[r] = last.dx * last.dx + last.dv * last.dv;
      } catch (const DivergenceError&) {
        bad[r] = 1;
      }
    });
    double acc = 0.0;
    for (std::size_t r = 0; r < replicas; ++r) {
      pt.diverged = pt.diverged || bad[r];
      acc += sq[r];
    }
    pt.rms = pt.diverged ? std::numeric_limits<double>::quiet_NaN()
                         : std::sqrt(acc / static_cast<double>(replicas));
    res.points.push_back(pt);
  }

  std::vector<double> lx, ly;
  std::vector<const RatePoint*> kept;
  for (const auto& p : res.points)
    if (!p.diverged && p.rms > 0.0) {
      lx.push_back(std::log(p.lambda));
      ly.push_back(std::log(p.rms));
      kept.push_back(&p);
    }
  if (lx.size() >= 2) res.slope = fit_slope(lx, ly);
  res.monotone = !kept.empty();
  for (std::size_t i = 1; i < kept.size(); ++i)
    if (kept[i]->rms > kept[i - 1]->rms) res.monotone = false;
  return res;
}

// ---------------------------------------------------------------- coupling

nlohmann::json CouplingSummary::to_json() const {
  return {{"points", steps.size()}, {"slope", opt(slope)},
          {"final_rms", rms.empty() ? nlohmann::json(nullptr) : num(rms.back())}};
}

CouplingSummary summarize_coupling(
    const std::vector<std::vector<CoupledDistance>>& runs,
    const std::function<double(const CoupledDistance&)>& metric) {
  CouplingSummary s;
  if (runs.empty()) return s;
  const std::size_t len = runs.front().size();
  std::vector<double> fx, fy;
  for (std::size_t t = 0; t < len; ++t) {
    double sq = 0.0, lg = 0.0;
    bool positive = true;
    for (const auto& run : runs) {
      const double v = metric(run[t]);
      sq += v * v;
      if (v > 0.0)
        lg += std::log(v);
      else
        positive = false;
    }
    s.steps.push_back(runs.front()[t].step);
    s.rms.push_back(std::sqrt(sq / runs.size()));
    const double ml = positive ? lg / runs.size() : -std::numeric_limits<double>::infinity();
    s.mean_log.push_back(ml);
    if (positive) {
      fx.push_back(static_cast<double>(runs.front()[t].step));
      fy.push_back(ml);
    }
  }
  if (fx.size() >= 2) s.slope = fit_slope(fx, fy);
  return s;
}

// ---------------------------------------------------------------- dispatch

namespace {

struct Context {
  const ExperimentConfig& cfg;
  const fs::path& dir;
  nlohmann::json& manifest;
  std::vector<std::string> files;

  void save(const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    files.push_back(name);
  }
};

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

int do_audit(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  const double radius = cfg.radius.value_or(default_probe_radius(prob.obj.cert));
  const AuditReport rep = audit_assumptions(prob.obj, prob.data, cfg.probes, radius,
                                            cfg.sampler.seed, cfg.lipschitz_pairs);
  const auto probes = default_variance_probes(prob.obj.dim, radius, 4, cfg.sampler.seed);
  const VarianceReport var = estimate_delta(prob.obj, prob.data, cfg.sampler.batch_size,
                                            probes, cfg.variance_trials, cfg.sampler.seed);
  std::vector<std::size_t> sizes;
  for (std::size_t l = 1; l <= std::min<std::size_t>(64, prob.data.n()); l *= 2)
    sizes.push_back(l);
  const Vector x0 = Vector::Constant(prob.obj.dim, 0.5 * radius / std::sqrt(prob.obj.dim));
  const VarianceCurve curve = variance_scaling_curve(prob.obj, prob.data, x0, sizes,
                                                     cfg.variance_trials, cfg.sampler.seed);
  nlohmann::json out = {{"audit", rep.to_json()},
                        {"variance", var.to_json()},
                        {"variance_curve", curve.to_json()}};
  ctx.save("audit.json", dump(out));
  ctx.manifest["results"] = {{"all_pass", rep.all_pass()}, {"delta_hat", var.delta_hat}};
  return rep.all_pass() ? kExitOk : kExitValidation;
}

int do_constants(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  const TheoryBundle tb = compute_theory(cfg, prob);
  nlohmann::json out = tb.to_json();
  out["scaling"] = scaling_table_json(
      scaling_orders(cfg.scaling_betas, cfg.scaling_dims, prob.obj.cert,
                     cfg.sampler.gamma, cfg.p),
      prob.obj.cert);
  if (cfg.q == 1 || cfg.q == 2) {
    double v0 = 0.0;
    if (cfg.sampler.init.kind == InitialLaw::Kind::point) {
      v0 = std::pow(lyapunov(tb.lyap, cfg.sampler.init.x0, cfg.sampler.init.v0), 2.0 * cfg.q);
    } else {
      Rng rng(derive_seed(cfg.sampler.seed, "v0-moment"));
      for (int i = 0; i < 4096; ++i) {
        const ChainState s = initial_state(cfg.sampler, static_cast<std::uint64_t>(i));
        v0 += std::pow(lyapunov(tb.lyap, s.x, s.v), 2.0 * cfg.q) / 4096.0;
      }
    }
    out["moment_certificate"] =
        lyapunov_moment_certificate(tb.drift, prob.obj.cert, cfg.sampler.gamma,
                                    cfg.sampler.beta, prob.obj.dim, cfg.sampler.lambda,
                                    cfg.q, v0, std::nullopt)
            .to_json();
  }
  ctx.save("constants.json", dump(out));
  ctx.manifest["results"] = {{"lambda_c", tb.drift.lambda_c},
                             {"lambda_cap", num(tb.moment.lambda_cap)},
                             {"c_star", tb.contraction.c_star}};
  return kExitOk;
}

int do_sample(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  std::vector<Trajectory> runs(cfg.replicas);
  std::vector<char> bad(cfg.replicas, 0);
  std::vector<std::uint64_t> where(cfg.replicas, 0);
  for_each_replica(cfg.replicas, [&](std::size_t r) {
    try {
      runs[r] = run_chain(cfg.chain, cfg.sampler, prob.obj, prob.data, cfg.steps, cfg.thin, r);
    } catch (const DivergenceError& e) {
      bad[r] = 1;
      where[r] = e.step();
    }
  });
  nlohmann::json reps = nlohmann::json::array();
  std::size_t diverged = 0;
  for (std::size_t r = 0; r < cfg.replicas; ++r) {
    if (bad[r]) {
      ++diverged;
      reps.push_back({{"replica", r}, {"diverged", true}, {"divergence_step", where[r]}});
      continue;
    }
    const std::string name = "trajectory_r" + std::to_string(r) + ".csv";
    ctx.save(name, runs[r].to_csv());
    reps.push_back(runs[r].manifest());
  }
  ctx.manifest["replica_runs"] = reps;
  ctx.manifest["results"] = {{"diverged", diverged}};
  return diverged == cfg.replicas ? kExitDivergence : kExitOk;
}

int do_couple(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  std::vector<std::vector<CoupledDistance>> dist(cfg.replicas);
  std::vector<char> bad(cfg.replicas, 0);
  for_each_replica(cfg.replicas, [&](std::size_t r) {
    try {
      dist[r] = coupled_run({cfg.chain, cfg.sampler}, {cfg.chain_b, cfg.sampler_b}, prob.obj,
                            prob.data, cfg.steps, cfg.thin, r)
                    .distances;
    } catch (const DivergenceError&) {
      bad[r] = 1;
    }
  });
  std::ostringstream os;
  os << "replica,step,time,dx,dv,dtwist\n";
  char buf[160];
  std::vector<std::vector<CoupledDistance>> ok;
  for (std::size_t r = 0; r < cfg.replicas; ++r) {
    if (bad[r]) continue;
    for (const auto& d : dist[r]) {
      std::snprintf(buf, sizeof buf, "%zu,%llu,%.17g,%.17g,%.17g,%.17g\n", r,
                    static_cast<unsigned long long>(d.step), d.time, d.dx, d.dv, d.dtwist);
      os << buf;
    }
    ok.push_back(dist[r]);
  }
  ctx.save("distances.csv", os.str());
  const auto summary =
      summarize_coupling(ok, [](const CoupledDistance& d) { return d.dtwist; });
  const auto euclid = summarize_coupling(
      ok, [](const CoupledDistance& d) { return std::hypot(d.dx, d.dv); });
  ctx.manifest["results"] = {{"summary", summary.to_json()},
                             {"summary_metric", "dtwist"},
                             {"summary_euclidean", euclid.to_json()},
                             {"diverged", std::count(bad.begin(), bad.end(), 1)}};
  return ok.empty() ? kExitDivergence : kExitOk;
}

int do_rate_study(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  const double min_lam = *std::min_element(cfg.lambdas.begin(), cfg.lambdas.end());
  const double ref = cfg.lambda_ref.value_or(min_lam / 16.0);
  if (!(ref < min_lam / 4.0)) throw ConfigError("lambda_ref must be below min(lambdas)/4");
  const RateStudyResult res = rate_study(prob.obj, prob.data, cfg.sampler, cfg.chain,
                                         cfg.lambdas, ref, cfg.t_end, cfg.replicas);
  std::ostringstream os;
  res.write_csv(os);
  ctx.save("rate_study.csv", os.str());
  ctx.manifest["results"] = res.to_json();
  const bool all_bad = std::all_of(res.points.begin(), res.points.end(),
                                   [](const RatePoint& p) { return p.diverged; });
  return all_bad ? kExitDivergence : kExitOk;
}

int do_gibbs(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  const GibbsReport rep = gibbs_check(prob.obj, prob.data, cfg.sampler, cfg.steps,
                                      cfg.burn_in.value_or(cfg.steps / 2), cfg.replicas,
                                      cfg.thin);
  std::ostringstream os;
  os << "coordinate,x_var,v_var,x_target,v_target\n";
  char buf[160];
  for (std::size_t i = 0; i < rep.x_var.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, rep.x_var[i],
                  rep.v_var[i], rep.x_target, rep.v_target);
    os << buf;
  }
  ctx.save("gibbs.csv", os.str());
  ctx.manifest["results"] = rep.to_json();
  return rep.pass() ? kExitOk : kExitValidation;
}

int do_risk(Context& ctx, const Problem& prob) {
  const auto& cfg = ctx.cfg;
  ExperimentConfig with_pilot = cfg;
  if (with_pilot.pilot_steps == 0) with_pilot.pilot_steps = 2000;
  const TheoryBundle tb = compute_theory(with_pilot, prob);

  RiskInputs in;
  in.lambda = cfg.sampler.lambda;
  in.delta = tb.delta;
  in.k = static_cast<double>(cfg.steps);
  in.p = cfg.p;
  in.q = cfg.q;
  in.n = prob.data.n();
  in.c_LS = cfg.c_LS;
  in.lambda_star = cfg.lambda_star;
  if (!in.c_LS && !in.lambda_star) in.lambda_star = 1.0;
  in.sigma = cfg.sigma.value_or(cfg.q == 1 ? std::sqrt(tb.pilot->sup_Ex2)
                                           : std::pow(tb.pilot->sup_Ex4, 0.25));

  // W_rho(mu0, pi) from 32 initial draws against 32 long-run exact-chain states.
  const std::size_t n = 32;
  SampleCloud init_cloud, ref_cloud;
  std::vector<Trajectory> ends(n);
  const std::size_t burn = std::max<std::size_t>(cfg.pilot_steps, 2000);
  for_each_replica(n, [&](std::size_t r) {
    ends[r] = run_chain(ChainKind::exact_sghmc, cfg.sampler, prob.obj, prob.data, burn, burn,
                        1000 + r);
  });
  for (std::size_t r = 0; r < n; ++r) {
    const ChainState s = initial_state(cfg.sampler, r);
    init_cloud.push_back(stack_states({s.x}, {s.v}).front());
    const auto& e = ends[r].states.back();
    ref_cloud.push_back(stack_states({e.x}, {e.v}).front());
  }
  nlohmann::json notes = nlohmann::json::array();
  try {
    const HFunction h(tb.contraction, 4096, tb.h_inner_limit);
    in.w_rho_init = rho_distance_cloud(init_cloud, ref_cloud, h, tb.lyap);
  } catch (const NumericalError& e) {
    in.w_rho_init = std::numeric_limits<double>::quiet_NaN();
    notes.push_back(std::string("w_rho_init unavailable: ") + e.what());
  }

  const RiskBound rb = risk_bound(tb.contraction, tb.proof, prob.obj.cert, cfg.sampler.gamma,
                                  cfg.sampler.beta, prob.obj.dim, in);
  const IterationBudget budget =
      iteration_budget(tb.contraction, *tb.proof.C_tilde, cfg.epsilon, in.w_rho_init);
  nlohmann::json out = {{"theory", tb.to_json()},
                        {"risk", rb.to_json()},
                        {"budget", budget.to_json()},
                        {"notes", notes}};
  ctx.save("risk.json", dump(out));
  ctx.manifest["results"] = {{"B_1", num(rb.B_1)}, {"B_2", num(rb.B_2)}, {"B_3", num(rb.B_3)}};
  return kExitOk;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  RunResult res;
  auto& m = res.manifest;
  m["software"] = {{"name", "sghmc_lab"}, {"version", software_version()}};
  m["config"] = cfg.to_json();
  nlohmann::json seeds = nlohmann::json::array();
  for (std::size_t r = 0; r < cfg.replicas; ++r)
    seeds.push_back({{"replica", r},
                     {"noise", derive_seed(cfg.sampler.seed, "noise", r)},
                     {"minibatch", derive_seed(cfg.sampler.seed, "minibatch", r)},
                     {"init", derive_seed(cfg.sampler.seed, "init", r)},
                     {"coupled_noise", derive_seed(cfg.sampler.seed, "coupled-noise", r)}});
  m["seeds"] = {{"master", cfg.sampler.seed}, {"dataset", cfg.dataset.seed}, {"replicas", seeds}};

  const auto findings = validate_config(cfg);
  nlohmann::json fj = nlohmann::json::array();
  for (const auto& f : findings) fj.push_back(f.to_json());
  m["findings"] = fj;

  Context ctx{cfg, out_dir, m, {}};
  if (has_errors(findings)) {
    res.exit_code = kExitValidation;
  } else if (cfg.kind == "validate") {
    res.exit_code = kExitOk;
  } else {
    try {
      const Problem prob = build_problem(cfg);
      if (cfg.kind == "audit") res.exit_code = do_audit(ctx, prob);
      else if (cfg.kind == "constants") res.exit_code = do_constants(ctx, prob);
      else if (cfg.kind == "sample") res.exit_code = do_sample(ctx, prob);
      else if (cfg.kind == "couple") res.exit_code = do_couple(ctx, prob);
      else if (cfg.kind == "rate-study") res.exit_code = do_rate_study(ctx, prob);
      else if (cfg.kind == "gibbs-check") res.exit_code = do_gibbs(ctx, prob);
      else if (cfg.kind == "risk-bound") res.exit_code = do_risk(ctx, prob);
    } catch (const DivergenceError& e) {
      m["error"] = e.what();
      res.exit_code = kExitDivergence;
    } catch (const std::exception& e) {
      m["error"] = e.what();
      res.exit_code = kExitValidation;
    }
  }
  m["files"] = ctx.files;
  m["exit_code"] = res.exit_code;
  m["wall_time_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(out_dir / "manifest.json", dump(m));
  return res;
}

}  // namespace sghmc
