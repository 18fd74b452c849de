#pragma once

#include "gvimp/gaussian.hpp"

#include <vector>

namespace gvimp {

/// Marginal covariance blocks of Λ⁻¹: diag[i] = Σ_ii, cross[i] = Σ_{i,i+1}.
struct ChainMarginals {
  std::vector<Matrix> diag;
  std::vector<Matrix> cross;
};

/// Exact two-sweep Gaussian belief propagation on the chain, O(N·n³).
/// Throws NumericalError when a belief precision is not SPD.
ChainMarginals gbp_marginals(const BlockTridiagonalMatrix& prec);

/// Solves Λ μ = η by block forward/back substitution.
Vector gbp_mean_solve(const BlockTridiagonalMatrix& prec, const Vector& info);

}  // namespace gvimp
