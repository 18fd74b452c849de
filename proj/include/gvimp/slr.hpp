#pragma once

#include "gvimp/dynamics.hpp"
#include "gvimp/optimizer.hpp"
#include "gvimp/quadrature.hpp"

#include <functional>
#include <vector>

namespace gvimp {

struct NominalTrajectory {
  std::vector<Vector> means;
  std::vector<Matrix> covs;

  void validate() const;
};

/// Discrete affine model y ≈ A x + a.
struct SlrFit {
  Matrix A;
  Vector a;
};

/// Statistical linear regression of y = f(x) under N(mean, cov) with the given
/// rule: A = P_yx P_xx⁻¹, a = E[f] − A E[x]. P_xx gets a 1e-9·I ridge only when
/// it is numerically singular.
SlrFit slr_fit(const std::function<Vector(const Vector&)>& f, const Vector& mean, const Matrix& cov,
               const QuadratureRule& rule);

/// Per-knot SLR of the Euler map x ↦ x + f₀(x)·dt, converted to continuous-time
/// triples A = (A_d − I)/dt, a = a_d/dt, B = g(x̄).
LtvSystem slr_linearize(const NonlinearSystem& sys, const NominalTrajectory& nominal, double dt,
                        const QuadratureRule& rule, int threads = 1);

struct OuterConfig {
  int max_outer = 10;
  double norm_tol = 1e-2;
  double nominal_cov = 0.05;
  /// Start each inner run after the first from the previous optimized mean.
  bool warm_start = true;

  void validate() const;
};

struct OuterRecord {
  int outer = 0;
  /// ‖x̄^{i+1} − x̄^i‖ over the stacked mean trajectory.
  double norm_diff = 0.0;
  int inner_steps = 0;
  CostBreakdown cost;
  double wall_ms = 0.0;
};

struct NonlinearProblem {
  Vector start;
  Vector goal;
  int num_intervals = 0;
  double total_time = 0.0;
  double q_c = 1.0;
  double boundary_sigma = 1e-3;
  int position_dim = 2;
  std::vector<Vector> waypoints;
};

struct OuterResult {
  RunResult last;
  /// Inner iteration logs, one per outer iteration.
  std::vector<std::vector<IterationRecord>> inner_logs;
  std::vector<std::vector<int>> inner_switches;
  std::vector<OuterRecord> log;
  bool converged = false;
};

/// Iterated SLR around the current nominal followed by P-GVIMP on the
/// linearized system, starting from a straight-line nominal with
/// covariance nominal_cov·I. The first inner run starts at the prior mean
/// (or a polyline through the waypoints), later ones per warm_start.
OuterResult run_ipgvimp(const NonlinearSystem& sys, const NonlinearProblem& problem, const SignedDistanceField& sdf,
                        const CollisionModel& model, const OptimizerConfig& cfg, const OuterConfig& outer);

}  // namespace gvimp
