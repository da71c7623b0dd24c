#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sghmc/gradient_oracle.hpp"
#include "sghmc/metrics.hpp"
#include "sghmc/objectives.hpp"
#include "sghmc/samplers.hpp"
#include "sghmc/theory.hpp"

namespace sghmc {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

const char* software_version();

struct ExperimentConfig {
  std::string kind = "sample";  // audit constants sample couple rate-study gibbs-check risk-bound validate
  std::string objective = "quadratic";
  nlohmann::json objective_params = nlohmann::json::object();
  DatasetSpec dataset;
  SamplerConfig sampler;
  ChainKind chain = ChainKind::sghmc;
  std::size_t steps = 10000;
  std::size_t thin = 100;
  std::size_t replicas = 1;

  // second chain of a coupled run; sampler fields not given inherit
  ChainKind chain_b = ChainKind::sghmc;
  SamplerConfig sampler_b;

  // theory
  double p = 2.0;
  int q = 1;
  std::optional<double> delta;  // estimated when absent
  std::optional<double> lambda_star;
  std::optional<double> c_LS;
  std::optional<double> sigma;
  double epsilon = 0.5;
  InnerLimit h_inner_limit = InnerLimit::running;
  std::size_t pilot_steps = 2000;
  std::size_t pilot_replicas = 16;
  std::vector<double> scaling_betas{1.0, 2.0, 4.0};
  std::vector<int> scaling_dims{2, 4, 8};

  // audit
  std::size_t probes = 1000;
  std::optional<double> radius;
  std::size_t lipschitz_pairs = 10000;
  std::size_t variance_trials = 2000;

  // rate study
  std::vector<double> lambdas{0.1, 0.05, 0.025, 0.0125};
  double t_end = 5.0;
  std::optional<double> lambda_ref;  // default min(lambdas)/16

  // gibbs check
  std::optional<std::size_t> burn_in;  // default steps/2

  std::string output = "out";
  bool strict = false;

  // Unknown top-level keys are rejected so typos do not go unnoticed.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Finding {
  std::string code;
  std::string severity;  // error | warning | info
  std::string message;

  nlohmann::json to_json() const;
};

// Findings: objective construction, sampler parameters, lambda against the
// moment-bound cap, the p/q relation and the initial-law check. With
// cfg.strict the inadmissible-step and initial-law warnings become errors.
std::vector<Finding> validate_config(const ExperimentConfig& cfg);
bool has_errors(const std::vector<Finding>& findings);

struct Problem {
  Dataset data;
  ObjectiveSpec obj;
};
Problem build_problem(const ExperimentConfig& cfg);

struct TheoryBundle {
  DriftConstants drift;
  ContractionConstants contraction;
  MomentBoundConstants moment;
  ProofConstants proof;
  std::optional<PilotStatistics> pilot;
  LyapunovParams lyap;
  InnerLimit h_inner_limit = InnerLimit::running;
  double delta = 0.0;

  nlohmann::json to_json() const;
};

// All constants for the configured problem. The pilot run is skipped when
// pilot_steps == 0, leaving c18 and C_tilde absent.
TheoryBundle compute_theory(const ExperimentConfig& cfg, const Problem& prob);

// Discrete stationary variances of exact SGHMC on a quadratic with
// curvature m0 (per coordinate): {position, momentum}.
std::pair<double, double> discrete_stationary_variance(double lambda, double gamma,
                                                       double beta, double m0);

struct GibbsReport {
  std::vector<double> x_var, v_var;  // empirical per coordinate
  double x_target = 0.0, v_target = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.05;
  // discrete-chain variances at lambda and lambda/2
  std::pair<double, double> oracle_lambda, oracle_half;
  // coupled estimate of Var(lambda) - Var(lambda/2), averaged over coordinates
  double coupled_diff_x = 0.0, coupled_diff_v = 0.0;
  bool variances_pass = false;
  bool bias_reduced = false;

  bool pass() const { return variances_pass && bias_reduced; }
  nlohmann::json to_json() const;
};

// Exact-gradient SGHMC on a quadratic objective; replicas pooled after
// burn-in. Throws ConfigError for other objectives.
GibbsReport gibbs_check(const ObjectiveSpec& obj, const Dataset& data,
                        const SamplerConfig& cfg, std::size_t steps,
                        std::size_t burn_in, std::size_t replicas,
                        std::size_t thin);

struct RatePoint {
  double lambda = 0.0;
  std::size_t steps = 0;
  double rms = 0.0;  // RMS over replicas of |(x, v) - (x_ref, v_ref)| at t_end
  bool diverged = false;
};

struct RateStudyResult {
  std::vector<RatePoint> points;
  double lambda_ref = 0.0;
  double t_end = 0.0;
  std::optional<double> slope;  // log rms against log lambda
  bool monotone = false;        // rms nonincreasing as lambda decreases

  nlohmann::json to_json() const;
  void write_csv(std::ostream& os) const;
};

// Coupled comparison at matched physical time t_end against an exact-gradient
// reference at lambda_ref; each lambda must be an integer multiple of it.
RateStudyResult rate_study(const ObjectiveSpec& obj, const Dataset& data,
                           const SamplerConfig& base, ChainKind kind,
                           const std::vector<double>& lambdas, double lambda_ref,
                           double t_end, std::size_t replicas);

struct CouplingSummary {
  std::vector<std::uint64_t> steps;
  std::vector<double> rms;       // RMS over replicas of |(dx, dv)|
  std::vector<double> mean_log;  // replica mean of log |(dx, dv)|
  std::optional<double> slope;   // of mean_log against step

  nlohmann::json to_json() const;
};

// `metric(d)` maps a distance record to the scalar being summarised.
CouplingSummary summarize_coupling(
    const std::vector<std::vector<CoupledDistance>>& runs,
    const std::function<double(const CoupledDistance&)>& metric);

struct RunResult {
  nlohmann::json manifest;
  int exit_code = kExitOk;
};

// Dispatches on cfg.kind, writes data files and manifest.json into out_dir.
RunResult run_experiment(const ExperimentConfig& cfg,
                         const std::filesystem::path& out_dir);

}  // namespace sghmc
