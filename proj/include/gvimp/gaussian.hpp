#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace gvimp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// (M + Mᵀ) / 2
Matrix symmetrize(const Matrix& m);

/// The single positive-definiteness predicate used across the library:
/// Cholesky succeeds and every pivot exceeds 1e-300.
bool is_positive_definite(const Matrix& m);

/// Lower Cholesky factor, or nullopt when `m` fails the predicate above.
std::optional<Matrix> cholesky_lower(const Matrix& m);

/// Gaussian in moment form. The covariance is symmetrized on construction and
/// must be positive definite.
class GaussianMoment {
 public:
  GaussianMoment(Vector mean, Matrix cov);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  Eigen::Index dim() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix cov_;
};

/// Gaussian in canonical (information) form. The precision may be only
/// positive semidefinite, e.g. for messages.
class GaussianCanonical {
 public:
  GaussianCanonical(Vector info, Matrix prec);

  const Vector& info() const { return info_; }
  const Matrix& prec() const { return prec_; }
  Eigen::Index dim() const { return info_.size(); }

 private:
  Vector info_;
  Matrix prec_;
};

/// KL(p ‖ q). Throws std::invalid_argument on dimension mismatch.
double kl_divergence(const GaussianMoment& p, const GaussianMoment& q);

/// Differential entropy ½ ln det(2πe Σ).
double entropy(const GaussianMoment& p);

GaussianCanonical to_canonical(const GaussianMoment& p);

/// Throws NumericalError when the precision is singular.
GaussianMoment to_moment(const GaussianCanonical& c);

/// Symmetric block-tridiagonal matrix with square blocks of equal size.
/// upper(i) is the (i, i+1) block; the (i+1, i) block is its transpose.
class BlockTridiagonalMatrix {
 public:
  BlockTridiagonalMatrix() = default;
  BlockTridiagonalMatrix(std::vector<Matrix> diag, std::vector<Matrix> upper);

  static BlockTridiagonalMatrix zeros(int num_blocks, int block_size);
  static BlockTridiagonalMatrix identity(int num_blocks, int block_size);

  int num_blocks() const { return static_cast<int>(diag_.size()); }
  int block_size() const { return diag_.empty() ? 0 : static_cast<int>(diag_.front().rows()); }
  int dim() const { return num_blocks() * block_size(); }

  const Matrix& diag(int i) const { return diag_[i]; }
  Matrix& diag(int i) { return diag_[i]; }
  const Matrix& upper(int i) const { return upper_[i]; }
  Matrix& upper(int i) { return upper_[i]; }

  Matrix to_dense() const;
  Vector multiply(const Vector& x) const;

  /// Replaces every diagonal block by its symmetric part.
  void symmetrize_blocks();

  BlockTridiagonalMatrix& operator+=(const BlockTridiagonalMatrix& other);
  BlockTridiagonalMatrix& operator*=(double s);
  friend BlockTridiagonalMatrix operator+(BlockTridiagonalMatrix a, const BlockTridiagonalMatrix& b) {
    a += b;
    return a;
  }
  friend BlockTridiagonalMatrix operator*(double s, BlockTridiagonalMatrix a) {
    a *= s;
    return a;
  }

 private:
  std::vector<Matrix> diag_;
  std::vector<Matrix> upper_;
};

/// Block Cholesky factorization L Lᵀ of a block-tridiagonal SPD matrix, O(N·n³).
/// L is block lower-bidiagonal: diagonal factors L_ii and sub-diagonal blocks L_{i+1,i}.
class BlockTridiagonalCholesky {
 public:
  /// Throws NumericalError if a non-positive pivot is encountered.
  explicit BlockTridiagonalCholesky(const BlockTridiagonalMatrix& m);

  static std::optional<BlockTridiagonalCholesky> try_factor(const BlockTridiagonalMatrix& m);

  double log_determinant() const;
  Vector solve(const Vector& rhs) const;

 private:
  BlockTridiagonalCholesky() = default;
  bool factor(const BlockTridiagonalMatrix& m);

  std::vector<Matrix> diag_factor_;
  std::vector<Matrix> sub_factor_;
};

/// ln det of a block-tridiagonal SPD matrix via block Cholesky.
double logdet_block_tridiag(const BlockTridiagonalMatrix& m);

/// Trajectory distribution: joint mean over N+1 knots and block-tridiagonal precision.
struct JointGaussian {
  Vector mean;
  BlockTridiagonalMatrix prec;

  int num_states() const { return prec.num_blocks(); }
  int state_dim() const { return prec.block_size(); }
  Vector state_mean(int i) const { return mean.segment(i * state_dim(), state_dim()); }
};

}  // namespace gvimp
