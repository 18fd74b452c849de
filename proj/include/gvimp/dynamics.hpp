#pragma once

#include "gvimp/gaussian.hpp"

#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace gvimp {

/// One (A, a, B) triple of dX = (A X + a) dt + B dW.
struct LtvStep {
  Matrix A;
  Vector a;
  Matrix B;
};

/// Linear time-varying stochastic system sampled at knots i = 0..N.
struct LtvSystem {
  std::vector<LtvStep> steps;
  double dt = 0.0;

  int state_dim() const { return steps.empty() ? 0 : static_cast<int>(steps.front().A.rows()); }
  int noise_dim() const { return steps.empty() ? 0 : static_cast<int>(steps.front().B.cols()); }
  /// Number of intervals N (there are N+1 knots).
  int num_intervals() const { return static_cast<int>(steps.size()) - 1; }

  /// Throws std::invalid_argument on inconsistent dimensions or dt <= 0.
  void validate() const;

  /// The same triple at every one of the num_intervals + 1 knots.
  static LtvSystem constant(const LtvStep& step, int num_intervals, double dt);
};

/// Nonlinear prior process dX = f₀(X) dt + g(X) dW.
struct NonlinearSystem {
  std::string name;
  int state_dim = 0;
  int noise_dim = 0;
  std::function<Vector(const Vector&)> drift;
  std::function<Matrix(const Vector&)> diffusion;
};

/// Double integrator [p; v] in 2 or 3 dimensions: A = [[0, I], [0, 0]], a = 0, B = [0; I].
LtvStep point_robot_lti(int dim);

struct QuadrotorParams {
  double mass = 1.0 / std::numbers::sqrt2;
  double length = std::numbers::sqrt2;
  double inertia = 1.0;
  double gravity = 9.81;
};

/// Planar quadrotor with state (x, z, φ, v_x, v_z, φ̇), zero thrust drift, and
/// process noise entering through the thrust input matrix.
NonlinearSystem planar_quadrotor(const QuadrotorParams& params = {});

/// x + f₀(x)·dt. Throws NumericalError if the result is not finite.
Vector euler_step(const NonlinearSystem& sys, const Vector& x, double dt);

}  // namespace gvimp
