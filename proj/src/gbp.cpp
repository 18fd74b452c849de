#include "gvimp/gbp.hpp"

#include "gvimp/errors.hpp"

#include <string>

namespace gvimp {

namespace {

Eigen::LLT<Matrix> factor_belief(const Matrix& m, int knot) {
  Eigen::LLT<Matrix> llt(symmetrize(m));
  if (llt.info() != Eigen::Success || !is_positive_definite(m)) {
    throw NumericalError("gbp: belief precision at knot " + std::to_string(knot) + " is not SPD");
  }
  return llt;
}

}  // namespace

ChainMarginals gbp_marginals(const BlockTridiagonalMatrix& prec) {
  const int blocks = prec.num_blocks();
  const int n = prec.block_size();
  const Matrix eye = Matrix::Identity(n, n);

  // Forward messages into knot i from the left; backward messages from the right.
  // The pairwise factor (i, i+1) carries the off-diagonal block B_i = upper(i);
  // marginalizing knot i out of it is the Schur complement −B_iᵀ (Λ_ii + fwd_i)⁻¹ B_i.
  std::vector<Matrix> fwd(blocks, Matrix::Zero(n, n));
  std::vector<Matrix> bwd(blocks, Matrix::Zero(n, n));
  for (int i = 0; i + 1 < blocks; ++i) {
    const auto llt = factor_belief(prec.diag(i) + fwd[i], i);
    fwd[i + 1] = symmetrize(-prec.upper(i).transpose() * llt.solve(prec.upper(i)));
  }
  // Cache (Λ_ii + bwd_i)⁻¹ for the cross blocks.
  std::vector<Matrix> right_inv(blocks);
  for (int i = blocks - 1; i > 0; --i) {
    const auto llt = factor_belief(prec.diag(i) + bwd[i], i);
    right_inv[i] = symmetrize(llt.solve(eye));
    bwd[i - 1] = symmetrize(-prec.upper(i - 1) * right_inv[i] * prec.upper(i - 1).transpose());
  }

  ChainMarginals out;
  out.diag.resize(blocks);
  out.cross.resize(blocks > 0 ? blocks - 1 : 0);
  for (int i = 0; i < blocks; ++i) {
    const auto llt = factor_belief(prec.diag(i) + fwd[i] + bwd[i], i);
    out.diag[i] = symmetrize(llt.solve(eye));
    if (i + 1 < blocks) out.cross[i] = -out.diag[i] * prec.upper(i) * right_inv[i + 1];
  }
  return out;
}

Vector gbp_mean_solve(const BlockTridiagonalMatrix& prec, const Vector& info) {
  return BlockTridiagonalCholesky(prec).solve(info);
}

}  // namespace gvimp
