#include "sghmc/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sghmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

nlohmann::json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

nlohmann::json exact(double v, const char* f) { return constant_entry(v, "exact", f); }
nlohmann::json empirical(double v, const char* f) {
  return constant_entry(v, "empirical", f);
}

}  // namespace

nlohmann::json constant_entry(double value, const std::string& status,
                              const std::string& formula) {
  return {{"value", num(value)}, {"status", status}, {"formula_ref", formula}};
}

// ---------------------------------------------------------------- drift

DriftConstants drift_constants_formula(const SmoothnessCertificate& cert,
                                       double gamma, double beta) {
  cert.validate();
  DriftConstants d;
  d.lambda_c =
      0.5 * std::min(0.25, cert.m / (cert.M + 2.0 * cert.B + 0.5 * gamma * gamma));
  d.A_c = std::max(0.5 * beta * (cert.b + 2.0 * cert.B + cert.A0),
                   std::numeric_limits<double>::epsilon());
  return d;
}

double drift_slack(const Vector& x, const ObjectiveSpec& obj,
                   const Dataset& data, double lambda_c, double A_c,
                   double gamma, double beta) {
  const double F = empirical_risk(x, obj, data);
  const double lhs = x.dot(empirical_gradient(x, obj, data));
  const double rhs =
      2.0 * lambda_c * (F + 0.25 * gamma * gamma * x.squaredNorm()) - 2.0 * A_c / beta;
  return lhs - rhs;
}

DriftConstants derive_drift_constants(const SmoothnessCertificate& cert,
                                      double gamma, double beta,
                                      const ObjectiveSpec& obj,
                                      const Dataset& data,
                                      const std::vector<Vector>& probes) {
  DriftConstants d = drift_constants_formula(cert, gamma, beta);
  d.probes = probes.size();
  for (int attempt = 0; attempt <= 20; ++attempt) {
    double worst = kInf;
    const Vector* witness = nullptr;
    bool ok = true;
    for (const auto& x : probes) {
      const double s = drift_slack(x, obj, data, d.lambda_c, d.A_c, gamma, beta);
      const double scale = 1.0 + std::abs(x.dot(empirical_gradient(x, obj, data)));
      if (s < worst) {
        worst = s;
        witness = &x;
      }
      if (s < -1e-10 * scale) ok = false;
    }
    d.min_margin = probes.empty() ? 0.0 : worst;
    if (ok) return d;
    if (attempt == 20)
      throw CertificationError(
          "drift inequality fails after 20 shrinks (slack " +
              std::to_string(worst) + ")",
          *witness);
    d.lambda_c *= 0.5;
    d.A_c *= 2.0;
    ++d.shrinks;
  }
  return d;
}

std::vector<Vector> ball_probes(int dim, std::size_t count, double radius,
                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, "ball-probes"));
  std::vector<Vector> out;
  out.reserve(count + 1);
  out.push_back(Vector::Zero(dim));
  for (std::size_t i = 0; i < count; ++i) out.push_back(rng.in_ball(dim, radius));
  return out;
}

nlohmann::json DriftConstants::to_json() const {
  return {{"lambda_c", exact(lambda_c, "0.5*min(1/4, m/(M+2B+gamma^2/2)) * 2^-shrinks")},
          {"A_c", exact(A_c, "(beta/2)(b+2B+A0) * 2^shrinks, floored at machine epsilon")},
          {"shrinks", shrinks},
          {"min_margin", num(min_margin)},
          {"probes", probes}};
}

// ---------------------------------------------------------------- Lyapunov

double lyapunov(const LyapunovParams& p, const Vector& x, const Vector& v) {
  const double F = empirical_risk(x, *p.obj, *p.data);
  const Vector w = v / p.gamma;
  return p.beta * F + 0.25 * p.beta * p.gamma * p.gamma *
                          ((x + w).squaredNorm() + w.squaredNorm() -
                           p.lambda_c * x.squaredNorm());
}

double lyapunov_lower_bound(const LyapunovParams& p, const Vector& x,
                            const Vector& v) {
  const double k = 1.0 - 2.0 * p.lambda_c;
  return std::max(0.125 * k * p.beta * p.gamma * p.gamma * x.squaredNorm(),
                  0.25 * p.beta * k * v.squaredNorm());
}

// ---------------------------------------------------------------- contraction

ContractionConstants contraction_constants(const DriftConstants& drift,
                                           const SmoothnessCertificate& cert,
                                           double gamma, double beta, int dim,
                                           double p) {
  if (!(p >= 1.0 && p <= 2.0)) throw ConfigError("contraction order p must lie in [1,2]");
  if (!(gamma > 0.0) || !(beta > 0.0) || !std::isfinite(beta))
    throw ConfigError("contraction constants need gamma > 0 and finite beta > 0");
  const double M = cert.M, lc = drift.lambda_c, Ac = drift.A_c;
  const double g2 = gamma * gamma;
  const double dA = dim + Ac;
  const double poly_scale = 2.4 * dA * M / g2 / lc / (1.0 - 2.0 * lc);
  auto Lambda_of = [&](double a) { return (1.0 + 2.0 * a + 2.0 * a * a) * poly_scale; };

  ContractionConstants cc;
  double alpha = M / g2;
  bool converged = false;
  for (int it = 1; it <= 200; ++it) {
    const double next = (1.0 + 1.0 / Lambda_of(alpha)) * M / g2;
    const double damped = 0.5 * (alpha + next);
    cc.iterations = it;
    if (std::abs(next - alpha) <= 1e-13 * std::abs(alpha)) {
      alpha = next;
      converged = true;
      break;
    }
    alpha = damped;
  }
  if (!converged) throw NumericalError("alpha_c / Lambda_c fixed point did not converge");

  const double Lam = Lambda_of(alpha);
  cc.alpha_c = alpha;
  cc.Lambda_c = Lam;
  const double log_tail = 0.5 * std::log(Lam) - Lam;
  cc.log_c_star = std::log(gamma / (384.0 * p)) +
                  std::min({std::log(lc * M / g2), log_tail + std::log(M / g2), log_tail});
  cc.c_star = std::exp(cc.log_c_star);
  const double poly = 1.0 + 2.0 * alpha + 2.0 * alpha * alpha;
  cc.R_1 = 4.0 * std::sqrt(1.2) * std::sqrt(poly) * std::sqrt(dA) / std::sqrt(beta) /
           gamma / std::sqrt(lc - 2.0 * lc * lc);
  cc.epsilon_c = 4.0 / gamma * cc.c_star / dA;
  const double R = cc.R_1;
  const double inner = 4.0 * std::max(1.0, std::pow(R, p - 2.0)) / std::min(1.0, R) *
                       poly * dA / beta / gamma / cc.c_star;
  cc.C_star = std::pow(2.0, 1.0 / p) * std::exp(2.0 / p + Lam / p) * (1.0 + gamma) /
              std::min(1.0, alpha) * std::pow(std::max(1.0, inner), 1.0 / p);
  cc.L_c = beta * M;
  cc.eta_c = 1.0 / Lam;
  cc.p = p;
  cc.gamma = gamma;
  cc.beta = beta;
  cc.M = M;
  cc.lambda_c = lc;
  cc.A_c = Ac;
  cc.dim = dim;
  return cc;
}

nlohmann::json ContractionConstants::to_json() const {
  return {
      {"log_c_star", exact(log_c_star, "log of c_star")},
      {"c_star", exact(c_star, "gamma/(384p) min(lambda_c M/gamma^2, sqrt(Lambda_c) e^-Lambda_c M/gamma^2, sqrt(Lambda_c) e^-Lambda_c)")},
      {"C_star", exact(C_star, "2^(1/p) e^(2/p+Lambda_c/p) (1+gamma)/min(1,alpha_c) max(1, 4 max(1,R_1^(p-2))/min(1,R_1) (1+2alpha_c+2alpha_c^2)(d+A_c)/(beta gamma c_star))^(1/p)")},
      {"Lambda_c", exact(Lambda_c, "(12/5)(1+2alpha_c+2alpha_c^2)(d+A_c) M gamma^-2 lambda_c^-1 (1-2lambda_c)^-1")},
      {"alpha_c", exact(alpha_c, "(1+1/Lambda_c) M gamma^-2 (fixed point)")},
      {"epsilon_c", exact(epsilon_c, "4 c_star/(gamma (d+A_c))")},
      {"R_1", exact(R_1, "4 sqrt(6/5) sqrt(1+2alpha_c+2alpha_c^2) sqrt(d+A_c) beta^-1/2 gamma^-1 (lambda_c-2lambda_c^2)^-1/2")},
      {"L_c", exact(L_c, "beta M")},
      {"eta_c", exact(eta_c, "1/Lambda_c")},
      {"p", p},
      {"fixed_point_iterations", iterations}};
}

// ---------------------------------------------------------------- h

HFunction::HFunction(const ContractionConstants& cc, std::size_t nodes, InnerLimit limit)
    : cc_(cc), limit_(limit) {
  if (nodes < 2) throw ConfigError("h quadrature needs at least 2 intervals");
  if (nodes % 2) ++nodes;
  a_ = (1.0 + cc.eta_c) * cc.L_c / 8.0 +
       0.5 * cc.gamma * cc.gamma * cc.beta * cc.epsilon_c *
           std::max(1.0, 1.0 / (2.0 * cc.alpha_c));
  const double R = cc.R_1;
  k_scaled_ = 2.25 * cc.gamma * cc.beta * std::exp(cc.log_c_star + a_ * R * R);
  step_ = R / static_cast<double>(nodes);
  const std::size_t panels = nodes / 2;
  cumulative_.assign(panels + 1, 0.0);
  for (std::size_t j = 1; j <= panels; ++j) {
    const double s0 = (2 * j - 2) * step_;
    cumulative_[j] = cumulative_[j - 1] +
                     step_ / 3.0 *
                         (scaled_ratio(s0) + 4.0 * scaled_ratio(s0 + step_) +
                          scaled_ratio(s0 + 2.0 * step_));
  }
  outer_.assign(panels + 1, 0.0);
  for (std::size_t j = 1; j <= panels; ++j) {
    const double s0 = (2 * j - 2) * step_;
    outer_[j] = outer_[j - 1] + step_ / 3.0 *
                                    (weighted(s0) + 4.0 * weighted(s0 + step_) +
                                     weighted(s0 + 2.0 * step_));
  }
  // g is decreasing, so its zero (if any) is found by bisection.
  if (g(R) >= 0.0) {
    validity_ = R;
  } else {
    double lo = 0.0, hi = R;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * R; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) >= 0.0 ? lo : hi) = mid;
    }
    validity_ = lo;
  }
}

double HFunction::phi(double s) const { return std::exp(-a_ * s * s); }

double HFunction::Phi(double s) const {
  const double ra = std::sqrt(a_);
  return 0.5 * std::sqrt(kPi) / ra * std::erf(ra * s);
}

double HFunction::scaled_ratio(double s) const {
  const double R = cc_.R_1;
  return Phi(s) * std::exp(a_ * (s * s - R * R));
}

double HFunction::scaled_inner(double r) const {
  if (r <= 0.0) return 0.0;
  const double panel = 2.0 * step_;
  auto j = static_cast<std::size_t>(r / panel);
  if (j >= cumulative_.size()) j = cumulative_.size() - 1;
  const double s0 = j * panel;
  const double len = r - s0;
  double val = cumulative_[j];
  if (len > 0.0)
    val += len / 6.0 *
           (scaled_ratio(s0) + 4.0 * scaled_ratio(s0 + 0.5 * len) + scaled_ratio(r));
  return val;
}

double HFunction::inner_integral(double r) const {
  const double R = cc_.R_1;
  return scaled_inner(r) * std::exp(a_ * R * R);
}

double HFunction::g(double s) const { return 1.0 - k_scaled_ * scaled_inner(s); }

double HFunction::weighted(double s) const { return phi(s) * g(s); }

double HFunction::running_value(double rho) const {
  const double panel = 2.0 * step_;
  auto j = static_cast<std::size_t>(rho / panel);
  if (j >= outer_.size()) j = outer_.size() - 1;
  const double s0 = j * panel;
  const double len = rho - s0;
  double val = outer_[j];
  if (len > 0.0)
    val += len / 6.0 * (weighted(s0) + 4.0 * weighted(s0 + 0.5 * len) + weighted(rho));
  return val;
}

double HFunction::operator()(double r) const {
  if (!(r >= 0.0)) throw ConfigError("h is defined for r >= 0");
  const double rho = std::min(r, cc_.R_1);
  const double val = limit_ == InnerLimit::running ? running_value(rho) : Phi(rho) * g(rho);
  if (val < 0.0 || std::isnan(val))
    throw NumericalError("h quadrature negative at r = " + std::to_string(r) +
                         " (g vanishes at r = " + std::to_string(validity_) + ")");
  return val;
}

double h_function(const ContractionConstants& cc, double r, std::size_t nodes,
                  InnerLimit limit) {
  return HFunction(cc, nodes, limit)(r);
}

InnerLimit parse_inner_limit(const std::string& s) {
  if (s == "running") return InnerLimit::running;
  if (s == "printed") return InnerLimit::printed;
  throw ConfigError("unknown h inner limit '" + s + "' (expected running or printed)");
}

std::string to_string(InnerLimit l) { return l == InnerLimit::running ? "running" : "printed"; }

double r_semimetric(const ContractionConstants& cc, const Vector& x1,
                    const Vector& v1, const Vector& x2, const Vector& v2) {
  const Vector dx = x1 - x2;
  return cc.alpha_c * dx.norm() + (dx + (v1 - v2) / cc.gamma).norm();
}

double rho_semimetric(const HFunction& h, const LyapunovParams& lyap,
                      const Vector& x1, const Vector& v1, const Vector& x2,
                      const Vector& v2) {
  const auto& cc = h.constants();
  const double r = r_semimetric(cc, x1, v1, x2, v2);
  if (r == 0.0) return 0.0;
  return h(r) * (1.0 + cc.epsilon_c * lyapunov(lyap, x1, v1) +
                 cc.epsilon_c * lyapunov(lyap, x2, v2));
}

// ---------------------------------------------------------------- moments

MomentBoundConstants moment_bound_constants(const DriftConstants& drift,
                                            const SmoothnessCertificate& cert,
                                            double gamma, double beta, int dim,
                                            double delta, double mu0) {
  const double lc = drift.lambda_c, Ac = drift.A_c, M = cert.M, B = cert.B;
  const double k = 1.0 - 2.0 * lc;
  const double g2 = gamma * gamma;
  MomentBoundConstants mb;
  mb.lyapunov_mu0_integral = mu0;
  mb.delta = delta;
  const double bc = mu0 + 5.0 * (dim + Ac) / lc;
  const double ba = mu0 + 8.0 * (dim + Ac) / lc;
  mb.C_c_x = 8.0 / (k * beta * g2) * bc;
  mb.C_c_v = 4.0 / (k * beta) * bc;
  mb.C_a_x = 8.0 / (k * beta * g2) * ba;
  mb.C_a_v = 4.0 / (k * beta) * ba;
  const double second = 8.0 * (0.5 * M + 0.25 * g2 - 0.25 * g2 * lc + gamma) / k;
  mb.K_1 = std::max(32.0 * M * M * (0.5 + gamma + delta) / (k * beta * g2),
                    second / beta);
  mb.K_2 = 2.0 * B * B * (0.5 + gamma + delta);
  mb.K_1_proof = std::max(16.0 * M * M * (3.0 + 2.0 * gamma) / (k * g2), second);
  mb.K_2_proof = B * B * (3.0 + 2.0 * gamma);
  const double first = mb.K_2 > 0.0 ? gamma * (dim + Ac) / (mb.K_2 * beta) : kInf;
  mb.lambda_cap = std::min(first, gamma * lc / (2.0 * mb.K_1));
  return mb;
}

nlohmann::json MomentBoundConstants::to_json() const {
  return {
      {"C_c_x", exact(C_c_x, "8/((1-2lambda_c) beta gamma^2) (int V dmu0 + 5(d+A_c)/lambda_c)")},
      {"C_c_v", exact(C_c_v, "4/((1-2lambda_c) beta) (int V dmu0 + 5(d+A_c)/lambda_c)")},
      {"C_a_x", exact(C_a_x, "8/((1-2lambda_c) beta gamma^2) (int V dmu0 + 8(d+A_c)/lambda_c)")},
      {"C_a_v", exact(C_a_v, "4/((1-2lambda_c) beta) (int V dmu0 + 8(d+A_c)/lambda_c)")},
      {"K_1", exact(K_1, "max(32M^2(1/2+gamma+delta)/((1-2lambda_c) beta gamma^2), 8(M/2+gamma^2/4-gamma^2 lambda_c/4+gamma)/(beta(1-2lambda_c)))")},
      {"K_2", exact(K_2, "2B^2(1/2+gamma+delta)")},
      {"K_1_proof", exact(K_1_proof, "max(16M^2(3+2gamma)/((1-2lambda_c) gamma^2), 8(M/2+gamma^2/4-gamma^2 lambda_c/4+gamma)/(1-2lambda_c))")},
      {"K_2_proof", exact(K_2_proof, "B^2(3+2gamma)")},
      {"lambda_cap", exact(lambda_cap, "min(gamma(d+A_c)/(K_2 beta), gamma lambda_c/(2K_1))")},
      {"lyapunov_mu0_integral", num(lyapunov_mu0_integral)},
      {"delta", delta}};
}

double mu0_lyapunov_integral(const LyapunovParams& lyap, const InitialLaw& law,
                             std::size_t samples, std::uint64_t seed) {
  if (law.kind == InitialLaw::Kind::point) return lyapunov(lyap, law.x0, law.v0);
  if (samples == 0) throw ConfigError("Monte Carlo integral needs samples > 0");
  Rng rng(derive_seed(seed, "mu0-integral"));
  double acc = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Vector x = law.x0 + law.scale * rng.normal_vector(law.x0.size());
    const Vector v = law.v0 + law.scale * rng.normal_vector(law.v0.size());
    acc += lyapunov(lyap, x, v);
  }
  return acc / static_cast<double>(samples);
}

InitAdmissibility initial_law_admissible(const InitialLaw& law,
                                         const SmoothnessCertificate& cert,
                                         double gamma, double beta) {
  InitAdmissibility out;
  if (law.kind == InitialLaw::Kind::point) {
    out.scale_limit = kInf;
    out.note = "point mass";
    return out;
  }
  const double k = std::max(beta * (0.5 * cert.M + 0.5 * gamma * gamma), 0.75 * beta);
  out.scale_limit = std::sqrt(1.0 / (2.0 * k));
  out.admissible = law.scale < out.scale_limit;
  out.note = out.admissible ? "gaussian scale below sufficient limit"
                            : "gaussian scale too large for the sufficient check";
  return out;
}

nlohmann::json PilotStatistics::to_json() const {
  return {{"sup_EV2_chain", empirical(sup_EV2_chain, "max_k mean_replicas V(x_k,v_k)^2")},
          {"sup_EV2_aux", empirical(sup_EV2_aux, "max_t mean_replicas V(x_t,v_t)^2, auxiliary process")},
          {"sup_Ex2", empirical(sup_Ex2, "max_k mean_replicas |x_k|^2")},
          {"sup_Ev2", empirical(sup_Ev2, "max_k mean_replicas |v_k|^2")},
          {"sup_Ex4", empirical(sup_Ex4, "max_k mean_replicas |x_k|^4")},
          {"replicas", replicas},
          {"steps", steps}};
}

PilotStatistics pilot_statistics(const ObjectiveSpec& obj, const Dataset& data,
                                 const SamplerConfig& cfg,
                                 const LyapunovParams& lyap, std::size_t steps,
                                 std::size_t replicas, std::size_t thin,
                                 std::size_t aux_refine) {
  if (replicas == 0 || thin == 0 || aux_refine == 0)
    throw ConfigError("pilot statistics need replicas, thin and refinement >= 1");
  const std::size_t slots = steps / thin + 1;
  std::vector<std::vector<double>> v2c(replicas), v2a(replicas), x2(replicas), p2(replicas),
      x4(replicas);
  for_each_replica(replicas, [&](std::size_t r) {
    const Trajectory chain = run_chain(ChainKind::sghmc, cfg, obj, data, steps, thin, r);
    const Trajectory aux = auxiliary_integrate(cfg, obj, data, static_cast<double>(steps),
                                               1.0 / aux_refine, thin * aux_refine, r);
    for (const auto& s : chain.states) {
      const double V = lyapunov(lyap, s.x, s.v);
      v2c[r].push_back(V * V);
      x2[r].push_back(s.x.squaredNorm());
      x4[r].push_back(s.x.squaredNorm() * s.x.squaredNorm());
      p2[r].push_back(s.v.squaredNorm());
    }
    for (const auto& s : aux.states) {
      const double V = lyapunov(lyap, s.x, s.v);
      v2a[r].push_back(V * V);
    }
  });
  auto sup_mean = [&](const std::vector<std::vector<double>>& rows) {
    double best = 0.0;
    for (std::size_t t = 0; t < slots; ++t) {
      double acc = 0.0;
      std::size_t cnt = 0;
      for (const auto& row : rows)
        if (t < row.size()) {
          acc += row[t];
          ++cnt;
        }
      if (cnt) best = std::max(best, acc / cnt);
    }
    return best;
  };
  PilotStatistics ps;
  ps.sup_EV2_chain = sup_mean(v2c);
  ps.sup_EV2_aux = sup_mean(v2a);
  ps.sup_Ex2 = sup_mean(x2);
  ps.sup_Ev2 = sup_mean(p2);
  ps.sup_Ex4 = sup_mean(x4);
  ps.replicas = replicas;
  ps.steps = steps;
  return ps;
}

// ---------------------------------------------------------------- proof chain

ProofConstants proof_constants(const SmoothnessCertificate& cert,
                               const MomentBoundConstants& mb, double gamma,
                               double beta, double /*delta*/,
                               const ContractionConstants& cc,
                               const std::optional<PilotStatistics>& pilot) {
  const double M = cert.M, B = cert.B, g2 = gamma * gamma;
  ProofConstants pc;
  const double eM = std::exp(M);
  const double root = std::sqrt(M * M * mb.C_a_x + B * B);
  pc.c2 = 4.0 * eM * root;
  pc.c3 = 2.0 * eM * root;
  pc.c8 = 3.0 * g2 * mb.C_a_v + 6.0 * M * M * mb.C_a_x + 6.0 * B * B + 6.0 * gamma / beta;
  pc.c9 = std::max(4.0 * g2 * pc.c8 + 4.0 * M * M * mb.C_a_v, 2.0 * pc.c8);
  pc.c10 = std::max(4.0 * g2 + 2.0, 4.0 * M * M);
  pc.c7 = std::sqrt(2.0 * pc.c9 * std::exp(pc.c10));
  pc.c14 = 3.0 * g2 * mb.C_c_v + 6.0 * M * M * mb.C_c_x + 6.0 * B * B + 6.0 * gamma / beta;
  pc.c15 = std::max(2.0 * (M * M * mb.C_a_x + B * B) + 4.0 * M * M * pc.c3 * pc.c3,
                    4.0 * M * M * (pc.c2 + pc.c7) * (pc.c2 + pc.c7));
  pc.c16 = std::max({pc.c2 + pc.c7, pc.c3, std::sqrt(pc.c14), std::sqrt(pc.c15)});
  pc.c17 = 3.0 * std::max(1.0 + cc.alpha_c, 1.0 / gamma);
  if (pilot) {
    pc.c18 = pc.c17 * (1.0 + cc.epsilon_c * std::sqrt(pilot->sup_EV2_chain) +
                       cc.epsilon_c * std::sqrt(pilot->sup_EV2_aux));
    const double geo = std::exp(-cc.c_star) / -std::expm1(-cc.c_star);
    const double tail = cc.C_star * std::pow(*pc.c18 * pc.c16, 1.0 / cc.p) * geo;
    pc.C_tilde = 2.0 * std::max({pc.c2, pc.c3, pc.c7, tail});
  }
  return pc;
}

nlohmann::json ProofConstants::to_json() const {
  nlohmann::json j = {
      {"c2", exact(c2, "4 e^M sqrt(M^2 C_a_x + B^2)")},
      {"c3", exact(c3, "2 e^M sqrt(M^2 C_a_x + B^2)")},
      {"c7", exact(c7, "sqrt(2 c9 e^c10)")},
      {"c8", exact(c8, "3 gamma^2 C_a_v + 6 M^2 C_a_x + 6 B^2 + 6 gamma/beta")},
      {"c9", exact(c9, "max(4 gamma^2 c8 + 4 M^2 C_a_v, 2 c8)")},
      {"c10", exact(c10, "max(4 gamma^2 + 2, 4 M^2)")},
      {"c14", exact(c14, "3 gamma^2 C_c_v + 6 M^2 C_c_x + 6 B^2 + 6 gamma/beta")},
      {"c15", exact(c15, "max(2(M^2 C_a_x + B^2) + 4 M^2 c3^2, 4 M^2 (c2+c7)^2)")},
      {"c16", exact(c16, "max(c2+c7, c3, sqrt(c14), sqrt(c15))")},
      {"c17", exact(c17, "3 max(1+alpha_c, 1/gamma)")}};
  if (c18)
    j["c18"] = empirical(*c18, "c17 (1 + eps_c sqrt(sup E V^2 chain) + eps_c sqrt(sup E V^2 aux))");
  if (C_tilde)
    j["C_tilde"] = empirical(*C_tilde, "2 max(c2, c3, c7, C_star (c18 c16)^(1/p) e^-c_star/(1-e^-c_star))");
  return j;
}

// ---------------------------------------------------------------- risk

double log_sobolev_constant(const SmoothnessCertificate& cert, double beta,
                            int dim, double lambda_star) {
  if (!(lambda_star > 0.0)) throw ConfigError("lambda_star must be > 0");
  const double m = cert.m, M = cert.M;
  return (2.0 * m * m + 8.0 * M * M) / (m * m * M * beta) +
         (6.0 * M * (dim + beta) / m + 2.0) / lambda_star;
}

double excess_gibbs_term(const SmoothnessCertificate& cert, double beta, int dim) {
  return dim / (2.0 * beta) *
         std::log(std::exp(1.0) * cert.M / cert.m * (cert.b * beta / dim + 1.0));
}

RiskBound risk_bound(const ContractionConstants& cc, const ProofConstants& proof,
                     const SmoothnessCertificate& cert, double /*gamma*/,
                     double beta, int dim, const RiskInputs& in) {
  if (in.q < 1) throw ConfigError("q must be a positive integer");
  if (!(in.p > 1.0 && in.p <= 2.0)) throw ConfigError("p must lie in (1,2]");
  if (std::abs(1.0 / in.p + 1.0 / (2.0 * in.q) - 1.0) > 1e-12)
    throw ConfigError("p and q must satisfy 1/p + 1/(2q) = 1");
  if (!proof.C_tilde) throw ConfigError("risk bound needs C_tilde (supply pilot statistics)");
  if (in.n == 0) throw ConfigError("sample size must be >= 1");

  RiskBound rb;
  rb.inputs = in;
  if (in.c_LS)
    rb.c_LS = *in.c_LS;
  else if (in.lambda_star)
    rb.c_LS = log_sobolev_constant(cert, beta, dim, *in.lambda_star);
  else
    throw ConfigError("risk bound needs c_LS or lambda_star");

  const double M = cert.M, m = cert.m, B = cert.B;
  const double ip = 1.0 / (2.0 * in.p);
  rb.B_1 = (M * in.sigma + B) *
           (*proof.C_tilde * (std::pow(in.lambda, ip) + std::pow(in.delta, ip)) +
            cc.C_star * std::pow(in.w_rho_init, 1.0 / in.p) *
                std::exp(-cc.c_star * in.k * in.lambda));
  rb.B_2 = 4.0 * beta * rb.c_LS / static_cast<double>(in.n) *
           (M * M / m * (cert.b + dim / beta) + B * B);
  rb.B_3 = excess_gibbs_term(cert, beta, dim);
  return rb;
}

nlohmann::json RiskBound::to_json() const {
  return {
      {"B_1", empirical(B_1, "(M sigma + B)(C_tilde (lambda^(1/2p) + delta^(1/2p)) + C_star W_rho^(1/p) e^(-c_star k lambda))")},
      {"B_2", exact(B_2, "(4 beta c_LS/n)((M^2/m)(b + d/beta) + B^2)")},
      {"B_3", exact(B_3, "(d/(2beta)) log((e M/m)(b beta/d + 1))")},
      {"c_LS", exact(c_LS, "(2m^2+8M^2)/(m^2 M beta) + (6M(d+beta)/m + 2)/lambda_star, or user value")},
      {"inputs",
       {{"lambda", inputs.lambda},
        {"delta", inputs.delta},
        {"k", inputs.k},
        {"p", inputs.p},
        {"q", inputs.q},
        {"sigma", inputs.sigma},
        {"w_rho_init", inputs.w_rho_init},
        {"n", inputs.n},
        {"c_LS", inputs.c_LS ? nlohmann::json(*inputs.c_LS) : nlohmann::json(nullptr)},
        {"lambda_star",
         inputs.lambda_star ? nlohmann::json(*inputs.lambda_star) : nlohmann::json(nullptr)}}}};
}

// ---------------------------------------------------------------- budget

IterationBudget iteration_budget(double c_star, double C_star, double C_tilde,
                                 double eps, double p, double w) {
  if (!(eps > 0.0)) throw ConfigError("epsilon must be > 0");
  IterationBudget b;
  b.lambda_delta_cap = eps / (2.0 * C_tilde);
  const double arg = C_star * std::pow(w, 1.0 / p) / eps;
  if (arg <= 1.0) {
    b.within_at_init = true;
    b.k_min = 0.0;
    return b;
  }
  b.k_min = std::ceil(std::pow(2.0 * C_tilde, 2.0 * p) / c_star *
                      std::pow(eps, -2.0 * p) * std::log(arg));
  return b;
}

IterationBudget iteration_budget(const ContractionConstants& cc, double C_tilde,
                                 double eps, double w) {
  return iteration_budget(cc.c_star, cc.C_star, C_tilde, eps, cc.p, w);
}

nlohmann::json IterationBudget::to_json() const {
  return {{"lambda_delta_cap", exact(lambda_delta_cap, "eps/(2 C_tilde)")},
          {"k_min", exact(k_min, "ceil((2C_tilde)^(2p)/c_star eps^(-2p) log(C_star W_rho^(1/p)/eps))")},
          {"within_at_init", within_at_init}};
}

// ---------------------------------------------------------------- scaling

std::vector<ScalingRow> scaling_orders(const std::vector<double>& betas,
                                       const std::vector<int>& dims,
                                       const SmoothnessCertificate& cert,
                                       double gamma, double p) {
  if (betas.empty() || dims.empty()) throw ConfigError("scaling ranges must be nonempty");
  std::vector<ScalingRow> rows;
  for (double beta : betas)
    for (int d : dims) {
      const DriftConstants dc = drift_constants_formula(cert, gamma, beta);
      const ContractionConstants cc = contraction_constants(dc, cert, gamma, beta, d, p);
      rows.push_back({beta, d, dc.A_c, cc.Lambda_c, cc.c_star, cc.C_star, cc.R_1, cc.log_c_star});
    }
  return rows;
}

nlohmann::json scaling_table_json(const std::vector<ScalingRow>& rows,
                                  const SmoothnessCertificate& cert) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    const double bd = r.beta + r.dim;
    out.push_back({{"beta", r.beta},
                   {"d", r.dim},
                   {"A_c", num(r.A_c)},
                   {"Lambda_c", num(r.Lambda_c)},
                   {"c_star", num(r.c_star)},
                   {"C_star", num(r.C_star)},
                   {"R_1", num(r.R_1)},
                   {"orders",
                    {{"A_c/beta", num(r.A_c / r.beta)},
                     {"A_c/beta expected", 0.5 * (cert.b + 2.0 * cert.B + cert.A0)},
                     {"Lambda_c/(beta+d)", num(r.Lambda_c / bd)},
                     {"R_1/sqrt(1+d/beta)", num(r.R_1 / std::sqrt(1.0 + r.dim / r.beta))},
                     {"log(c_star)/(beta+d)", num(r.log_c_star / bd)}}}});
  }
  return out;
}

// ---------------------------------------------------------------- 2q moments

double gaussian_norm_moment(int dim, double k) {
  return std::exp(0.5 * k * std::log(2.0) + std::lgamma(0.5 * (dim + k)) -
                  std::lgamma(0.5 * dim));
}

double MomentCertificate::bound_at(double k) const {
  return std::pow(rate, k) * V0_2q + (bound - V0_2q);
}

MomentCertificate lyapunov_moment_certificate(const DriftConstants& drift,
                                              const SmoothnessCertificate& cert,
                                              double gamma, double beta,
                                              int dim, double lambda, int q,
                                              double V0_2q,
                                              std::optional<double> empirical_max) {
  if (q != 1 && q != 2) throw ConfigError("moment certificate supports q in {1,2}");
  const double lc = drift.lambda_c, Ac = drift.A_c, M = cert.M, B = cert.B;
  const double g2 = gamma * gamma, k = 1.0 - 2.0 * lc, d = dim;
  const double K2 = B * B * (3.0 + 2.0 * gamma);

  MomentCertificate mc;
  mc.q = q;
  mc.lambda = lambda;
  const double om = 1.0 - lambda * gamma;
  mc.P_1 = 2.0 * std::max(2.0 * gamma / beta * (3.0 * g2 + 10.0 * M * M) / (k * g2 / 16.0),
                          2.0 * gamma / beta * (3.0 + 2.0 * om * om) / (k / 8.0));
  mc.P_2 = 20.0 * gamma / beta * B * B;
  mc.c_19 = gamma * Ac + beta * K2 + gamma * d;

  const double E4 = gaussian_norm_moment(dim, 4.0);
  const double E2q = gaussian_norm_moment(dim, 2.0 * q);
  // E (a0 + a1 |xi| + a2 |xi|^2)^{2q} by expanding the polynomial in |xi|.
  const double a0 = gamma * Ac + beta * K2;
  std::vector<double> base = {a0, beta * std::sqrt(mc.P_2), gamma};
  std::vector<double> poly = {1.0};
  for (int i = 0; i < 2 * q; ++i) {
    std::vector<double> next(poly.size() + 2, 0.0);
    for (std::size_t a = 0; a < poly.size(); ++a)
      for (std::size_t b = 0; b < base.size(); ++b) next[a + b] += poly[a] * base[b];
    poly.swap(next);
  }
  double Epoly = 0.0;
  for (std::size_t j = 0; j < poly.size(); ++j)
    Epoly += poly[j] * (j == 0 ? 1.0 : gaussian_norm_moment(dim, static_cast<double>(j)));

  const double qq = q;
  const double c2q = qq * (2.0 * qq - 1.0);
  const double P1q = std::pow(beta * mc.P_1, qq);
  mc.M_tilde_1 = std::max((a0 * a0 + g2 * E4 + beta * beta * d * mc.P_2) / (beta * d * mc.P_1),
                          std::pow(Epoly, 1.0 / qq) /
                              (beta * mc.P_1 * std::pow(E2q, 1.0 / qq)));
  const double glc = gamma * lc;
  mc.M_tilde = std::max(
      {mc.M_tilde_1, 24.0 * mc.c_19 * qq / glc,
       72.0 * c2q * std::pow(2.0, 2.0 * qq - 3.0) * beta * d * mc.P_1 / glc,
       std::pow(12.0 * c2q * std::pow(2.0, 4.0 * qq - 3.0) * P1q * E2q / glc, 1.0 / qq)});
  const double Mt = mc.M_tilde;
  mc.N_tilde = 2.0 * mc.c_19 * qq * std::pow(Mt, 2.0 * qq - 1.0) +
               6.0 * c2q * std::pow(2.0, 2.0 * qq - 3.0) * beta * d * mc.P_1 *
                   std::pow(Mt, 2.0 * qq - 1.0) +
               c2q * std::pow(2.0, 4.0 * qq - 3.0) * P1q * E2q * std::pow(Mt, qq);
  mc.phi = 1.0 - lambda * glc / 2.0;
  mc.rate = 1.0 - lambda * glc / 4.0;
  mc.V0_2q = V0_2q;
  mc.bound = V0_2q + 4.0 * mc.N_tilde / glc;
  mc.empirical_max = empirical_max;
  return mc;
}

nlohmann::json MomentCertificate::to_json() const {
  nlohmann::json j = {
      {"q", q},
      {"lambda", lambda},
      {"P_1", exact(P_1, "2 max(2gamma/beta (3gamma^2+10M^2)/((1-2lambda_c)gamma^2/16), 2gamma/beta (3+2(1-lambda gamma)^2)/((1-2lambda_c)/8))")},
      {"P_2", exact(P_2, "20 gamma B^2/beta")},
      {"c_19", exact(c_19, "gamma A_c + beta K_2 + gamma d")},
      {"M_tilde_1", exact(M_tilde_1, "max(((gamma A_c+beta K_2)^2 + gamma^2 E|xi|^4 + beta^2 d P_2)/(beta d P_1), (E(gamma A_c+beta K_2+gamma|xi|^2+beta sqrt(P_2)|xi|)^(2q))^(1/q)/(beta P_1 (E|xi|^(2q))^(1/q)))")},
      {"M_tilde", exact(M_tilde, "max(M_tilde_1, 24 c_19 q/(gamma lambda_c), 72 q(2q-1) 2^(2q-3) beta d P_1/(gamma lambda_c), (12 q(2q-1) 2^(4q-3) beta^q P_1^q E|xi|^(2q)/(gamma lambda_c))^(1/q))")},
      {"N_tilde", exact(N_tilde, "2 c_19 q M^(2q-1) + 6 q(2q-1) 2^(2q-3) beta d P_1 M^(2q-1) + q(2q-1) 2^(4q-3) beta^q P_1^q E|xi|^(2q) M^q")},
      {"phi", exact(phi, "1 - lambda gamma lambda_c/2")},
      {"rate", exact(rate, "1 - lambda gamma lambda_c/4")},
      {"V0_2q", num(V0_2q)},
      {"bound", exact(bound, "E V_0^(2q) + 4 N_tilde/(gamma lambda_c)")}};
  j["empirical_max"] = empirical_max ? num(*empirical_max) : nlohmann::json(nullptr);
  j["holds"] = holds();
  return j;
}

}  // namespace sghmc
