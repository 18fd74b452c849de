#include "gvimp/gaussian.hpp"

#include "gvimp/errors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gvimp {

namespace {

constexpr double kMinPivot = 1e-300;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(what) + " must be square");
  }
}

}  // namespace

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

std::optional<Matrix> cholesky_lower(const Matrix& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return std::nullopt;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Matrix l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    const double pivot = l(i, i) * l(i, i);
    if (!(pivot > kMinPivot)) return std::nullopt;
  }
  return l;
}

bool is_positive_definite(const Matrix& m) { return cholesky_lower(m).has_value(); }

GaussianMoment::GaussianMoment(Vector mean, Matrix cov) : mean_(std::move(mean)) {
  require_square(cov, "covariance");
  if (cov.rows() != mean_.size()) {
    throw std::invalid_argument("covariance dimension does not match mean");
  }
  cov_ = symmetrize(cov);
  if (!mean_.allFinite() || !is_positive_definite(cov_)) {
    throw std::invalid_argument("covariance is not positive definite");
  }
}

GaussianCanonical::GaussianCanonical(Vector info, Matrix prec) : info_(std::move(info)) {
  require_square(prec, "precision");
  if (prec.rows() != info_.size()) {
    throw std::invalid_argument("precision dimension does not match information vector");
  }
  if (!prec.allFinite() || !info_.allFinite()) {
    throw std::invalid_argument("canonical parameters must be finite");
  }
  prec_ = symmetrize(prec);
}

double kl_divergence(const GaussianMoment& p, const GaussianMoment& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  const Matrix lp = *cholesky_lower(p.cov());
  const Matrix lq = *cholesky_lower(q.cov());
  const auto lq_view = lq.triangularView<Eigen::Lower>();

  // tr(Σq⁻¹ Σp) = ‖Lq⁻¹ Lp‖²_F
  const Matrix m = lq_view.solve(lp);
  const Vector diff = lq_view.solve(Vector(q.mean() - p.mean()));
  const double logdet_p = 2.0 * lp.diagonal().array().log().sum();
  const double logdet_q = 2.0 * lq.diagonal().array().log().sum();
  const double kl = 0.5 * (m.squaredNorm() + diff.squaredNorm() - static_cast<double>(p.dim()) +
                           logdet_q - logdet_p);
  return std::max(kl, 0.0);
}

double entropy(const GaussianMoment& p) {
  const Matrix l = *cholesky_lower(p.cov());
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  const double d = static_cast<double>(p.dim());
  return 0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + logdet);
}

GaussianCanonical to_canonical(const GaussianMoment& p) {
  const Eigen::LLT<Matrix> llt(p.cov());
  const Matrix prec = llt.solve(Matrix::Identity(p.dim(), p.dim()));
  return {prec * p.mean(), prec};
}

GaussianMoment to_moment(const GaussianCanonical& c) {
  if (!is_positive_definite(c.prec())) {
    throw NumericalError("to_moment: precision matrix is singular or indefinite");
  }
  const Eigen::LLT<Matrix> llt(c.prec());
  Matrix cov = llt.solve(Matrix::Identity(c.dim(), c.dim()));
  Vector mean = llt.solve(c.info());
  return {std::move(mean), std::move(cov)};
}

// ---------------------------------------------------------------------------

BlockTridiagonalMatrix::BlockTridiagonalMatrix(std::vector<Matrix> diag, std::vector<Matrix> upper)
    : diag_(std::move(diag)), upper_(std::move(upper)) {
  if (diag_.empty()) throw std::invalid_argument("block-tridiagonal matrix needs at least one block");
  if (upper_.size() + 1 != diag_.size()) {
    throw std::invalid_argument("block-tridiagonal matrix needs exactly one fewer off-diagonal block");
  }
  const Eigen::Index n = diag_.front().rows();
  for (const auto& b : diag_) {
    if (b.rows() != n || b.cols() != n) throw std::invalid_argument("inconsistent diagonal block size");
  }
  for (const auto& b : upper_) {
    if (b.rows() != n || b.cols() != n) throw std::invalid_argument("inconsistent off-diagonal block size");
  }
}

BlockTridiagonalMatrix BlockTridiagonalMatrix::zeros(int num_blocks, int block_size) {
  return {std::vector<Matrix>(num_blocks, Matrix::Zero(block_size, block_size)),
          std::vector<Matrix>(num_blocks - 1, Matrix::Zero(block_size, block_size))};
}

BlockTridiagonalMatrix BlockTridiagonalMatrix::identity(int num_blocks, int block_size) {
  auto m = zeros(num_blocks, block_size);
  for (auto& b : m.diag_) b.setIdentity();
  return m;
}

Matrix BlockTridiagonalMatrix::to_dense() const {
  const int n = block_size();
  Matrix dense = Matrix::Zero(dim(), dim());
  for (int i = 0; i < num_blocks(); ++i) {
    dense.block(i * n, i * n, n, n) = diag_[i];
    if (i + 1 < num_blocks()) {
      dense.block(i * n, (i + 1) * n, n, n) = upper_[i];
      dense.block((i + 1) * n, i * n, n, n) = upper_[i].transpose();
    }
  }
  return dense;
}

Vector BlockTridiagonalMatrix::multiply(const Vector& x) const {
  if (x.size() != dim()) throw std::invalid_argument("block-tridiagonal multiply: dimension mismatch");
  const int n = block_size();
  Vector y(dim());
  for (int i = 0; i < num_blocks(); ++i) {
    Vector yi = diag_[i] * x.segment(i * n, n);
    if (i > 0) yi.noalias() += upper_[i - 1].transpose() * x.segment((i - 1) * n, n);
    if (i + 1 < num_blocks()) yi.noalias() += upper_[i] * x.segment((i + 1) * n, n);
    y.segment(i * n, n) = yi;
  }
  return y;
}

void BlockTridiagonalMatrix::symmetrize_blocks() {
  for (auto& b : diag_) b = symmetrize(b);
}

BlockTridiagonalMatrix& BlockTridiagonalMatrix::operator+=(const BlockTridiagonalMatrix& other) {
  if (other.num_blocks() != num_blocks() || other.block_size() != block_size()) {
    throw std::invalid_argument("block-tridiagonal sum: shape mismatch");
  }
  for (std::size_t i = 0; i < diag_.size(); ++i) diag_[i] += other.diag_[i];
  for (std::size_t i = 0; i < upper_.size(); ++i) upper_[i] += other.upper_[i];
  return *this;
}

BlockTridiagonalMatrix& BlockTridiagonalMatrix::operator*=(double s) {
  for (auto& b : diag_) b *= s;
  for (auto& b : upper_) b *= s;
  return *this;
}

// ---------------------------------------------------------------------------

BlockTridiagonalCholesky::BlockTridiagonalCholesky(const BlockTridiagonalMatrix& m) {
  if (!factor(m)) throw NumericalError("block Cholesky: non-positive pivot encountered");
}

std::optional<BlockTridiagonalCholesky> BlockTridiagonalCholesky::try_factor(
    const BlockTridiagonalMatrix& m) {
  BlockTridiagonalCholesky c;
  if (!c.factor(m)) return std::nullopt;
  return c;
}

bool BlockTridiagonalCholesky::factor(const BlockTridiagonalMatrix& m) {
  const int blocks = m.num_blocks();
  diag_factor_.clear();
  sub_factor_.clear();
  diag_factor_.reserve(blocks);
  sub_factor_.reserve(blocks > 0 ? blocks - 1 : 0);

  Matrix schur = m.diag(0);
  for (int i = 0; i < blocks; ++i) {
    auto l = cholesky_lower(symmetrize(schur));
    if (!l) return false;
    diag_factor_.push_back(std::move(*l));
    if (i + 1 == blocks) break;
    // L_{i+1,i} = A_{i+1,i} L_ii⁻ᵀ = (L_ii⁻¹ A_{i,i+1})ᵀ
    Matrix sub = diag_factor_.back().triangularView<Eigen::Lower>().solve(m.upper(i)).transpose();
    schur = m.diag(i + 1) - sub * sub.transpose();
    sub_factor_.push_back(std::move(sub));
  }
  return true;
}

double BlockTridiagonalCholesky::log_determinant() const {
  double sum = 0.0;
  for (const auto& l : diag_factor_) sum += l.diagonal().array().log().sum();
  return 2.0 * sum;
}

Vector BlockTridiagonalCholesky::solve(const Vector& rhs) const {
  const int blocks = static_cast<int>(diag_factor_.size());
  const int n = static_cast<int>(diag_factor_.front().rows());
  if (rhs.size() != blocks * n) throw std::invalid_argument("block Cholesky solve: dimension mismatch");

  Vector y(rhs.size());
  for (int i = 0; i < blocks; ++i) {
    Vector r = rhs.segment(i * n, n);
    if (i > 0) r.noalias() -= sub_factor_[i - 1] * y.segment((i - 1) * n, n);
    y.segment(i * n, n) = diag_factor_[i].triangularView<Eigen::Lower>().solve(r);
  }
  Vector x(rhs.size());
  for (int i = blocks - 1; i >= 0; --i) {
    Vector r = y.segment(i * n, n);
    if (i + 1 < blocks) r.noalias() -= sub_factor_[i].transpose() * x.segment((i + 1) * n, n);
    x.segment(i * n, n) = diag_factor_[i].transpose().triangularView<Eigen::Upper>().solve(r);
  }
  return x;
}

double logdet_block_tridiag(const BlockTridiagonalMatrix& m) {
  return BlockTridiagonalCholesky(m).log_determinant();
}

}  // namespace gvimp
