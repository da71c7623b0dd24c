#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sghmc/objectives.hpp"
#include "sghmc/samplers.hpp"

namespace sghmc {

// Drift inequality could not be verified at some probe even after shrinking.
class CertificationError : public std::runtime_error {
 public:
  CertificationError(const std::string& what, Vector witness)
      : std::runtime_error(what), witness_(std::move(witness)) {}
  const Vector& witness() const { return witness_; }

 private:
  Vector witness_;
};

// Table entry carried by every serialized constant.
nlohmann::json constant_entry(double value, const std::string& status,
                              const std::string& formula);

struct DriftConstants {
  double lambda_c = 0.0;
  double A_c = 0.0;
  int shrinks = 0;           // number of halvings applied after verification
  double min_margin = 0.0;   // smallest slack over the probes (>= -tol)
  std::size_t probes = 0;

  nlohmann::json to_json() const;
};

// lambda_c = 0.5 min{1/4, m/(M+2B+gamma^2/2)}, A_c = (beta/2)(b+2B+A0),
// floored at machine epsilon. No verification.
DriftConstants drift_constants_formula(const SmoothnessCertificate& cert,
                                       double gamma, double beta);

// Slack of <x, grad F(x)> >= 2 lambda_c (F(x) + gamma^2|x|^2/4) - 2 A_c/beta.
double drift_slack(const Vector& x, const ObjectiveSpec& obj,
                   const Dataset& data, double lambda_c, double A_c,
                   double gamma, double beta);

// Formula values verified at the probes; on a violation lambda_c is halved
// and A_c doubled, at most 20 times.
DriftConstants derive_drift_constants(const SmoothnessCertificate& cert,
                                      double gamma, double beta,
                                      const ObjectiveSpec& obj,
                                      const Dataset& data,
                                      const std::vector<Vector>& probes);

// Origin plus `count` uniform points in the ball of `radius`.
std::vector<Vector> ball_probes(int dim, std::size_t count, double radius,
                                std::uint64_t seed);

struct LyapunovParams {
  double beta = 1.0;
  double gamma = 2.0;
  double lambda_c = 0.125;
  const ObjectiveSpec* obj = nullptr;
  const Dataset* data = nullptr;
};

// beta F(x) + (beta gamma^2/4)(|x + v/gamma|^2 + |v/gamma|^2 - lambda_c|x|^2)
double lyapunov(const LyapunovParams& p, const Vector& x, const Vector& v);
// max{(1-2lambda_c) beta gamma^2 |x|^2 / 8, beta (1-2lambda_c) |v|^2 / 4}
double lyapunov_lower_bound(const LyapunovParams& p, const Vector& x,
                            const Vector& v);

struct ContractionConstants {
  double c_star = 0.0;
  double log_c_star = 0.0;  // kept separately since c_star underflows for large Lambda_c
  double C_star = 0.0;
  double Lambda_c = 0.0;
  double alpha_c = 0.0;
  double epsilon_c = 0.0;
  double R_1 = 0.0;
  double L_c = 0.0;
  double eta_c = 0.0;
  double p = 2.0;
  int iterations = 0;
  // Inputs echoed for downstream formulas.
  double gamma = 0.0;
  double beta = 0.0;
  double M = 0.0;
  double lambda_c = 0.0;
  double A_c = 0.0;
  int dim = 0;

  nlohmann::json to_json() const;
};

ContractionConstants contraction_constants(const DriftConstants& drift,
                                           const SmoothnessCertificate& cert,
                                           double gamma, double beta, int dim,
                                           double p);

// Inner limit of the integral inside g. `running` uses g(s) = 1 - k int_0^s,
// which gives a nondecreasing concave h while g >= 0. `printed` uses the
// outer variable r, so h(r) = Phi(rho) (1 - k I(rho)).
enum class InnerLimit { running, printed };

// Distance profile h(r) = int_0^rho phi(s) g(s) ds, rho = min(r, R_1), with
// phi(s) = exp(-a s^2), Phi its integral (closed form), I(r) = int_0^r Phi/phi
// and k = (9/4) c* gamma beta. I is tabulated by composite Simpson in units of
// exp(a R_1^2) so that c* I stays finite when c* underflows.
class HFunction {
 public:
  explicit HFunction(const ContractionConstants& cc, std::size_t nodes = 4096,
                     InnerLimit limit = InnerLimit::running);

  double operator()(double r) const;
  double phi(double s) const;
  double Phi(double s) const;
  double g(double s) const;               // 1 - k I(s)
  double inner_integral(double r) const;  // I(r), may overflow to inf
  double validity_radius() const { return validity_; }  // sup{r <= R_1 : g(r) >= 0}
  InnerLimit limit() const { return limit_; }
  double a() const { return a_; }
  const ContractionConstants& constants() const { return cc_; }

 private:
  double scaled_ratio(double s) const;    // Phi(s)/phi(s) exp(-a R_1^2)
  double scaled_inner(double r) const;    // I(r) exp(-a R_1^2)
  double weighted(double s) const;        // phi(s) g(s)
  double running_value(double rho) const;

  ContractionConstants cc_;
  InnerLimit limit_ = InnerLimit::running;
  double a_ = 0.0;
  double step_ = 0.0;
  double k_scaled_ = 0.0;  // k exp(a R_1^2)
  double validity_ = 0.0;
  std::vector<double> cumulative_;  // scaled I at even grid nodes
  std::vector<double> outer_;       // int_0^s phi g at even grid nodes
};

double h_function(const ContractionConstants& cc, double r,
                  std::size_t nodes = 4096,
                  InnerLimit limit = InnerLimit::running);
InnerLimit parse_inner_limit(const std::string& s);
std::string to_string(InnerLimit l);

// alpha_c |dx| + |dx + dv/gamma|
double r_semimetric(const ContractionConstants& cc, const Vector& x1,
                    const Vector& v1, const Vector& x2, const Vector& v2);
// h(r) (1 + eps_c V(x1,v1) + eps_c V(x2,v2))
double rho_semimetric(const HFunction& h, const LyapunovParams& lyap,
                      const Vector& x1, const Vector& v1, const Vector& x2,
                      const Vector& v2);

struct MomentBoundConstants {
  double C_c_x = 0.0, C_c_v = 0.0, C_a_x = 0.0, C_a_v = 0.0;
  double K_1 = 0.0, K_2 = 0.0;  // stated form, used for lambda_cap
  double K_1_proof = 0.0, K_2_proof = 0.0;
  double lambda_cap = 0.0;
  double lyapunov_mu0_integral = 0.0;
  double delta = 0.0;

  nlohmann::json to_json() const;
};

MomentBoundConstants moment_bound_constants(const DriftConstants& drift,
                                            const SmoothnessCertificate& cert,
                                            double gamma, double beta, int dim,
                                            double delta,
                                            double mu0_lyapunov_integral);

// Exact for a point mass; Monte Carlo with `samples` draws otherwise.
double mu0_lyapunov_integral(const LyapunovParams& lyap, const InitialLaw& law,
                             std::size_t samples, std::uint64_t seed);

// Sufficient condition for E exp(V) < inf under a gaussian initial law:
// scale^2 < 1 / (2 max{beta (M/2 + gamma^2/2), 3 beta / 4}).
struct InitAdmissibility {
  bool admissible = true;
  double scale_limit = 0.0;  // +inf for point masses
  std::string note;
};
InitAdmissibility initial_law_admissible(const InitialLaw& law,
                                         const SmoothnessCertificate& cert,
                                         double gamma, double beta);

// sup_k E V^2 along the chain and along the auxiliary process.
struct PilotStatistics {
  double sup_EV2_chain = 0.0;
  double sup_EV2_aux = 0.0;
  double sup_Ex2 = 0.0;  // sup_k E|x_k|^2 along the chain
  double sup_Ev2 = 0.0;
  double sup_Ex4 = 0.0;  // sup_k E|x_k|^4
  std::size_t replicas = 0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

// Runs `replicas` SGHMC chains and auxiliary paths (substep lambda/aux_refine
// in iteration units) for `steps` iterations and records the sup over thinned
// times of the replica means.
PilotStatistics pilot_statistics(const ObjectiveSpec& obj, const Dataset& data,
                                 const SamplerConfig& cfg,
                                 const LyapunovParams& lyap, std::size_t steps,
                                 std::size_t replicas, std::size_t thin,
                                 std::size_t aux_refine = 10);

struct ProofConstants {
  double c2 = 0, c3 = 0, c7 = 0, c8 = 0, c9 = 0, c10 = 0;
  double c14 = 0, c15 = 0, c16 = 0, c17 = 0;
  std::optional<double> c18;
  std::optional<double> C_tilde;

  nlohmann::json to_json() const;
};

ProofConstants proof_constants(const SmoothnessCertificate& cert,
                               const MomentBoundConstants& moment,
                               double gamma, double beta, double delta,
                               const ContractionConstants& cc,
                               const std::optional<PilotStatistics>& pilot);

struct RiskInputs {
  double lambda = 0.0;
  double delta = 0.0;
  double k = 0.0;  // iteration count
  double p = 2.0;
  int q = 1;
  double sigma = 0.0;
  double w_rho_init = 0.0;
  std::size_t n = 1;
  std::optional<double> c_LS;
  std::optional<double> lambda_star;
};

struct RiskBound {
  double B_1 = 0.0, B_2 = 0.0, B_3 = 0.0;
  double c_LS = 0.0;
  RiskInputs inputs;

  nlohmann::json to_json() const;
};

// Throws ConfigError when 1/p + 1/(2q) != 1, p outside (1,2], neither c_LS
// nor lambda_star is given, or C_tilde is missing.
RiskBound risk_bound(const ContractionConstants& cc, const ProofConstants& proof,
                     const SmoothnessCertificate& cert, double gamma,
                     double beta, int dim, const RiskInputs& in);

// (2 m^2 + 8 M^2)/(m^2 M beta) + (6 M (d + beta)/m + 2)/lambda_star
double log_sobolev_constant(const SmoothnessCertificate& cert, double beta,
                            int dim, double lambda_star);
// (d/(2 beta)) log((e M/m)(b beta/d + 1))
double excess_gibbs_term(const SmoothnessCertificate& cert, double beta, int dim);

struct IterationBudget {
  double lambda_delta_cap = 0.0;  // bound on lambda^{1/2p} + delta^{1/2p}
  double k_min = 0.0;             // may be +inf
  bool within_at_init = false;

  nlohmann::json to_json() const;
};

IterationBudget iteration_budget(double c_star, double C_star, double C_tilde,
                                 double eps, double p, double w_rho_init);
IterationBudget iteration_budget(const ContractionConstants& cc,
                                 double C_tilde, double eps, double w_rho_init);

struct ScalingRow {
  double beta = 0.0;
  int dim = 0;
  double A_c = 0.0, Lambda_c = 0.0, c_star = 0.0, C_star = 0.0, R_1 = 0.0;
  double log_c_star = 0.0;
};

std::vector<ScalingRow> scaling_orders(const std::vector<double>& betas,
                                       const std::vector<int>& dims,
                                       const SmoothnessCertificate& cert,
                                       double gamma, double p);
nlohmann::json scaling_table_json(const std::vector<ScalingRow>& rows,
                                  const SmoothnessCertificate& cert);

// E|xi|^k for xi ~ N(0, I_d).
double gaussian_norm_moment(int dim, double k);

struct MomentCertificate {
  int q = 1;
  double lambda = 0.0;
  double P_1 = 0.0, P_2 = 0.0, c_19 = 0.0;
  double M_tilde_1 = 0.0, M_tilde = 0.0, N_tilde = 0.0;
  double phi = 0.0;       // 1 - lambda gamma lambda_c / 2
  double rate = 0.0;      // 1 - lambda gamma lambda_c / 4
  double V0_2q = 0.0;     // E V_0^{2q}
  double bound = 0.0;     // sup over k of the implied bound
  std::optional<double> empirical_max;

  double bound_at(double k) const;
  bool holds() const { return !empirical_max || *empirical_max <= bound; }
  nlohmann::json to_json() const;
};

MomentCertificate lyapunov_moment_certificate(const DriftConstants& drift,
                                              const SmoothnessCertificate& cert,
                                              double gamma, double beta,
                                              int dim, double lambda, int q,
                                              double V0_2q,
                                              std::optional<double> empirical_max);

}  // namespace sghmc
