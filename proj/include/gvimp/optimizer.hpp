#pragma once

#include "gvimp/factor_graph.hpp"
#include "gvimp/gaussian.hpp"
#include "gvimp/gbp.hpp"
#include "gvimp/gp_prior.hpp"
#include "gvimp/quadrature.hpp"
#include "gvimp/sdf.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gvimp {

enum class QuadratureKind { Smolyak, Tensor };

struct OptimizerConfig {
  double kl_bound = 1.0;
  double beta_min = 1e-4;
  double beta_max = 0.9;
  double temperature_low = 1.0;
  double temperature_high = 10.0;
  /// Switch to the high temperature once collision cost drops below this;
  /// negative means 1e-4·N.
  double collision_switch_tol = -1.0;
  int max_iters = 200;
  double tol_mean = 1e-6;
  double tol_cost = 1e-6;
  int quadrature_level = 3;
  QuadratureKind quadrature = QuadratureKind::Smolyak;
  /// Σ⁰ = init_cov_scale · K.
  double init_cov_scale = 0.1;
  int threads = 0;

  /// Throws ConfigError on invalid values.
  void validate() const;
};

QuadratureRule make_rule(const OptimizerConfig& cfg, int dim);

struct CostBreakdown {
  double prior = 0.0;
  double collision = 0.0;
  /// −T̂ · H(q)
  double entropy = 0.0;
  double total = 0.0;

  double mp() const { return prior + collision; }
};

/// Costs of `cur` at temperature T̂ given its GBP marginals and the summed E[ψ].
CostBreakdown cost_breakdown(const JointGaussian& cur, const ChainMarginals& marg, const DiscretePrior& prior,
                             double collision, double temperature);

/// As above, evaluating the collision factors itself.
CostBreakdown cost_breakdown(const JointGaussian& cur, const DiscretePrior& prior, const SignedDistanceField& sdf,
                             const CollisionModel& model, const QuadratureRule& rule, double temperature,
                             int threads = 1);

/// One KL-proximal step with temperature-scaled prior and potential:
///   Λ'              = β/(β+1) · (2G/T̂ + K⁻¹/T̂ + Λ_k/β)
///   (K⁻¹/T̂ + Λ_k/β) μ' = −g/T̂ + K⁻¹μ/T̂ + Λ_k μ_k/β
/// The returned precision is not checked for definiteness.
JointGaussian proximal_update(const JointGaussian& cur, const DiscretePrior& prior, const JointGradients& grads,
                              double beta, double temperature);

/// KL(p ‖ q) between joint Gaussians using block-tridiagonal routines only.
/// nullopt when p's precision is not SPD or the result is lost to rounding.
std::optional<double> joint_kl(const JointGaussian& p, const JointGaussian& q);

struct StepChoice {
  double beta = 0.0;
  double kl = 0.0;
  JointGaussian next;
};

/// Largest β in [beta_min, beta_max] (bisection to relative width 1e-3) whose
/// update is SPD with KL(next ‖ cur) ≤ kl_bound. Throws NumericalError when
/// beta_min is infeasible.
StepChoice select_step_size(const JointGaussian& cur, const DiscretePrior& prior, const JointGradients& grads,
                            const OptimizerConfig& cfg, double temperature);

struct IterationRecord {
  int iter = 0;
  double temperature = 0.0;
  CostBreakdown cost;
  /// Step that produced this iterate; zero for the initial point.
  double beta = 0.0;
  double kl_step = 0.0;
  double mean_step = 0.0;
  double wall_ms = 0.0;
};

struct RunResult {
  JointGaussian joint;
  ChainMarginals marginals;
  CostBreakdown final_cost;
  double final_temperature = 0.0;
  std::vector<IterationRecord> log;
  /// Iteration indices at which the temperature switched.
  std::vector<int> switches;
  bool converged = false;
  int steps = 0;
  double wall_ms = 0.0;
};

/// Initial mean through `waypoints` (positions only). Knots are spaced by arc
/// length; other coordinates are interpolated linearly from start to goal.
/// With fill_velocity the coordinates after the position block hold the
/// finite-difference velocity (point robots).
Vector interpolate_mean(const Vector& start, const Vector& goal, int num_states, int position_dim,
                        const std::vector<Vector>& waypoints, bool fill_velocity, double dt);

/// Called with every iterate, including the initial one, and its log index.
using IterateObserver = std::function<void(int, const JointGaussian&)>;

/// The P-GVIMP loop: GBP marginals, parallel collision factors, cost log,
/// temperature schedule, gradient assembly, step-size selection, proximal update.
RunResult run_pgvimp(const DiscretePrior& prior, const SignedDistanceField& sdf, const CollisionModel& model,
                     const OptimizerConfig& cfg, const Vector& init_mean,
                     const std::optional<BlockTridiagonalMatrix>& init_prec = std::nullopt,
                     const IterateObserver& observer = {});

}  // namespace gvimp
