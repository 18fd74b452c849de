#pragma once

#include "gvimp/dynamics.hpp"
#include "gvimp/gaussian.hpp"

#include <vector>

namespace gvimp {

/// Deterministic flow of dX = (A X + a) dt over one interval: x⁺ = Φ x + φ.
struct TransitionKernel {
  Matrix phi;
  Vector offset;
};

/// Zero-order hold on interval i: A_i, a_i frozen at the left knot and
/// exponentiated through the augmented matrix [[A, a], [0, 0]]·dt.
TransitionKernel transition_kernel(const LtvSystem& sys, int i);

/// Process-noise Grammian Q_i = ∫₀^dt Φ(dt,s) B q_c Bᵀ Φ(dt,s)ᵀ ds by 10-node
/// Gauss–Legendre. Eigenvalues are floored at λ_max·1e-5 so rank-deficient noise
/// channels still give a usable precision.
Matrix grammian(const LtvSystem& sys, int i, double q_c);

/// Nodes and weights of the `count`-point Gauss–Legendre rule on [-1, 1].
void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights);

struct BoundaryConditions {
  Vector start;
  Vector goal;
  double sigma = 1e-3;
};

/// Discrete Gaussian prior N(μ, K) of the zero-input process with soft start/goal anchors.
struct DiscretePrior {
  std::vector<Matrix> phis;
  std::vector<Vector> offsets;
  std::vector<Matrix> grammians;
  /// Zero-input flow from the start state: flow_{i+1} = Φ_i flow_i + φ_i.
  Vector flow_mean;
  /// Mean of the anchored joint prior, μ = K Bᵀ Q̃⁻¹ r.
  Vector mean;
  /// K⁻¹ = Bᵀ Q̃⁻¹ B.
  BlockTridiagonalMatrix prec;
  BoundaryConditions boundary;

  int state_dim() const { return prec.block_size(); }
  int num_states() const { return prec.num_blocks(); }
};

DiscretePrior assemble_prior(const LtvSystem& sys, const Vector& start, const Vector& goal, double q_c,
                             double sigma_b);

}  // namespace gvimp
