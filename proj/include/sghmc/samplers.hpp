#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "sghmc/gradient_oracle.hpp"
#include "sghmc/objectives.hpp"
#include "sghmc/rng.hpp"

namespace sghmc {

enum class ChainKind { sgld, sghmc, exact_sghmc };

std::string to_string(ChainKind kind);
ChainKind chain_kind_from_string(const std::string& name);

struct InitialLaw {
  enum class Kind { point, gaussian };

  Kind kind = Kind::point;
  Vector x0;  // position, or mean of the position for gaussian
  Vector v0;  // momentum, or mean of the momentum for gaussian
  double scale = 0.0;

  static InitialLaw point(Vector x0, Vector v0);
  static InitialLaw gaussian(Vector mean_x, Vector mean_v, double scale);

  nlohmann::json to_json() const;
  // Missing vectors default to zeros of length `dim`.
  static InitialLaw from_json(const nlohmann::json& j, int dim);
};

struct SamplerConfig {
  double lambda = 0.01;  // step size
  double gamma = 2.0;    // friction
  double beta = 1.0;     // inverse temperature; +inf switches the noise off
  std::size_t batch_size = 1;
  int dim = 1;
  std::uint64_t seed = 0;
  InitialLaw init;

  // lambda and gamma may be zero (degenerate modes); beta must be positive.
  void validate() const;
  double noise_coefficient() const;  // sqrt(2 gamma lambda / beta)

  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& j, int dim);
};

struct ChainState {
  Vector x;
  Vector v;
  std::uint64_t step = 0;
  Rng rng;  // Gaussian innovations
};

// Draws the initial point (for gaussian laws) and seeds the noise stream for
// the given replica. Streams are derived from cfg.seed.
ChainState initial_state(const SamplerConfig& cfg, std::uint64_t replica = 0);

// Deterministic one-step maps with the gradient estimate and Gaussian draw
// supplied by the caller.
//   v' = v - lambda (gamma v + g) + sqrt(2 gamma lambda / beta) xi
//   x' = x + lambda v          (pre-update momentum)
void sghmc_update(ChainState& s, const SamplerConfig& cfg, const Vector& grad,
                  const Vector& xi);
//   x' = x - lambda g + sqrt(2 lambda / beta) xi
void sgld_update(ChainState& s, const SamplerConfig& cfg, const Vector& grad,
                 const Vector& xi);

// Stream-driven steps: draw xi from s.rng and indices from the oracle.
void sghmc_step(ChainState& s, const SamplerConfig& cfg, MinibatchOracle& oracle);
void exact_sghmc_step(ChainState& s, const SamplerConfig& cfg,
                      const ObjectiveSpec& obj, const Dataset& data);
void sgld_step(ChainState& s, const SamplerConfig& cfg, MinibatchOracle& oracle);

struct Snapshot {
  std::uint64_t step = 0;
  double time = 0.0;
  Vector x;
  Vector v;
};

struct Trajectory {
  std::string kind;
  SamplerConfig config;
  std::uint64_t replica = 0;
  std::size_t stride = 1;
  std::vector<Snapshot> states;
  bool diverged = false;
  std::uint64_t divergence_step = 0;

  // Columns: step, x_0..x_{d-1}, v_0..v_{d-1}; values printed with %.17g.
  void write_csv(std::ostream& os) const;
  std::string to_csv() const;
  nlohmann::json manifest() const;
};

// Iterates the chosen step and records every `thin`-th state, starting with
// the initial one. Divergence propagates as DivergenceError.
Trajectory run_chain(ChainKind kind, const SamplerConfig& cfg,
                     const ObjectiveSpec& obj, const Dataset& data,
                     std::size_t steps, std::size_t thin,
                     std::uint64_t replica = 0);

// Fine Euler-Maruyama path of the underdamped SDE
//   dV = -gamma V dt - grad F(X) dt + sqrt(2 gamma / beta) dB,  dX = V dt.
// Uses cfg.gamma, cfg.beta, cfg.init and cfg.seed; cfg.lambda is ignored.
Trajectory underdamped_integrate(const SamplerConfig& cfg,
                                 const ObjectiveSpec& obj, const Dataset& data,
                                 double t_end, double substep,
                                 std::size_t thin = 1,
                                 std::uint64_t replica = 0);

// Time-scaled process with clock lambda:
//   dV = -lambda (gamma V + grad F(X)) dt + sqrt(2 gamma lambda / beta) dB,
//   dX = lambda V dt.
// Its law at parameter time t equals the underdamped law at time lambda t.
Trajectory auxiliary_integrate(const SamplerConfig& cfg,
                               const ObjectiveSpec& obj, const Dataset& data,
                               double t_end, double substep,
                               std::size_t thin = 1,
                               std::uint64_t replica = 0);

struct ChainSpec {
  ChainKind kind = ChainKind::sghmc;
  SamplerConfig cfg;
};

struct CoupledDistance {
  std::uint64_t step = 0;  // step index of the coarser chain
  double time = 0.0;       // physical time step * lambda_coarse
  double dx = 0.0;         // |x_a - x_b|
  double dv = 0.0;         // |v_a - v_b|
  double dtwist = 0.0;     // |x_a - x_b + (v_a - v_b)/gamma_a|
};

struct CoupledRun {
  Trajectory a;
  Trajectory b;
  std::vector<CoupledDistance> distances;
};

// Synchronous coupling: both chains consume one Gaussian stream (seeded from
// a.cfg.seed). When step sizes differ their ratio must be an integer r; the
// finer chain takes r steps per coarse step and the coarse chain uses the
// normalised sum of the r fine draws. Minibatch indices are shared when both
// chains consume minibatches of the same size at the same step size.
// `steps` counts steps of the coarser chain.
CoupledRun coupled_run(const ChainSpec& a, const ChainSpec& b,
                       const ObjectiveSpec& obj, const Dataset& data,
                       std::size_t steps, std::size_t thin,
                       std::uint64_t replica = 0);

// Runs fn(replica) for replica = 0..count-1 on a small thread pool. Results
// are written by fn into caller-owned slots, so the reduction order is fixed.
void for_each_replica(std::size_t count,
                      const std::function<void(std::size_t)>& fn);

}  // namespace sghmc
