#include "gvimp/gp_prior.hpp"

#include "gvimp/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gvimp {

namespace {

constexpr int kGrammianNodes = 10;
// Eigenvalues below λ_max / kGrammianMaxCondition are lifted to that floor.
constexpr double kGrammianMaxCondition = 1e5;

Matrix expm(const Matrix& m) { return m.exp(); }

}  // namespace

void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights) {
  if (count < 1) throw std::invalid_argument("gauss_legendre: count must be >= 1");
  nodes.assign(count, 0.0);
  weights.assign(count, 0.0);
  for (int k = 0; k < (count + 1) / 2; ++k) {
    double x = std::cos(std::numbers::pi * (k + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int j = 2; j <= count; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = count * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute the derivative at the converged root
    double p0 = 1.0;
    double p1 = x;
    for (int j = 2; j <= count; ++j) {
      const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    dp = count * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[k] = -x;
    nodes[count - 1 - k] = x;
    weights[k] = w;
    weights[count - 1 - k] = w;
  }
  if (count % 2 == 1) nodes[count / 2] = 0.0;
}

TransitionKernel transition_kernel(const LtvSystem& sys, int i) {
  if (i < 0 || i >= sys.num_intervals()) throw std::out_of_range("transition_kernel: interval index");
  const auto& step = sys.steps[i];
  const int n = static_cast<int>(step.A.rows());
  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = step.A * sys.dt;
  aug.topRightCorner(n, 1) = step.a * sys.dt;
  const Matrix flow = expm(aug);
  return {flow.topLeftCorner(n, n), flow.topRightCorner(n, 1)};
}

Matrix grammian(const LtvSystem& sys, int i, double q_c) {
  if (!(q_c > 0.0)) throw std::invalid_argument("grammian: q_c must be positive");
  if (i < 0 || i >= sys.num_intervals()) throw std::out_of_range("grammian: interval index");
  const auto& step = sys.steps[i];
  const int n = static_cast<int>(step.A.rows());
  const Matrix noise = q_c * step.B * step.B.transpose();

  std::vector<double> nodes;
  std::vector<double> weights;
  gauss_legendre(kGrammianNodes, nodes, weights);
  const double half = 0.5 * sys.dt;
  Matrix q = Matrix::Zero(n, n);
  for (int k = 0; k < kGrammianNodes; ++k) {
    const double s = half * (1.0 + nodes[k]);
    const Matrix phi = expm(step.A * (sys.dt - s));
    q.noalias() += (half * weights[k]) * (phi * noise * phi.transpose());
  }
  q = symmetrize(q);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(q);
  const double top = es.eigenvalues().maxCoeff();
  if (!(top > 0.0)) throw NumericalError("grammian: interval " + std::to_string(i) + " has no positive eigenvalue");
  const double floor = top / kGrammianMaxCondition;
  if (es.eigenvalues().minCoeff() >= floor) return q;
  const Vector lifted = es.eigenvalues().cwiseMax(floor);
  return symmetrize(es.eigenvectors() * lifted.asDiagonal() * es.eigenvectors().transpose());
}

DiscretePrior assemble_prior(const LtvSystem& sys, const Vector& start, const Vector& goal, double q_c,
                             double sigma_b) {
  sys.validate();
  if (!(sigma_b > 0.0)) throw std::invalid_argument("assemble_prior: boundary sigma must be positive");
  const int n = sys.state_dim();
  const int intervals = sys.num_intervals();
  if (start.size() != n || goal.size() != n) {
    throw std::invalid_argument("assemble_prior: boundary state dimension mismatch");
  }

  DiscretePrior prior;
  prior.boundary = {start, goal, sigma_b};
  prior.phis.reserve(intervals);
  prior.offsets.reserve(intervals);
  prior.grammians.reserve(intervals);
  for (int i = 0; i < intervals; ++i) {
    auto kernel = transition_kernel(sys, i);
    prior.phis.push_back(std::move(kernel.phi));
    prior.offsets.push_back(std::move(kernel.offset));
    prior.grammians.push_back(grammian(sys, i, q_c));
  }

  prior.flow_mean.resize((intervals + 1) * n);
  prior.flow_mean.head(n) = start;
  for (int i = 0; i < intervals; ++i) {
    prior.flow_mean.segment((i + 1) * n, n) =
        prior.phis[i] * prior.flow_mean.segment(i * n, n) + prior.offsets[i];
  }

  // K⁻¹ = Bᵀ Q̃⁻¹ B with B the block-bidiagonal difference operator and
  // Q̃ = blockdiag(σ_b² I, Q_0, ..., Q_{N-1}, σ_b² I).
  auto prec = BlockTridiagonalMatrix::zeros(intervals + 1, n);
  Vector info = Vector::Zero((intervals + 1) * n);
  const double anchor = 1.0 / (sigma_b * sigma_b);
  prec.diag(0).diagonal().array() += anchor;
  prec.diag(intervals).diagonal().array() += anchor;
  info.head(n) += anchor * start;
  info.tail(n) += anchor * goal;

  for (int i = 0; i < intervals; ++i) {
    const Eigen::LLT<Matrix> llt(prior.grammians[i]);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("assemble_prior: singular Grammian on interval " + std::to_string(i));
    }
    const Matrix q_inv = symmetrize(llt.solve(Matrix::Identity(n, n)));
    const Matrix& phi = prior.phis[i];
    const Matrix phit_qinv = phi.transpose() * q_inv;
    prec.diag(i) += phit_qinv * phi;
    prec.diag(i + 1) += q_inv;
    prec.upper(i) -= phit_qinv;
    info.segment(i * n, n) -= phit_qinv * prior.offsets[i];
    info.segment((i + 1) * n, n) += q_inv * prior.offsets[i];
  }
  prec.symmetrize_blocks();

  prior.mean = BlockTridiagonalCholesky(prec).solve(info);
  prior.prec = std::move(prec);
  return prior;
}

}  // namespace gvimp
