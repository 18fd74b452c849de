#include "gvimp/quadrature.hpp"

#include "gvimp/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace gvimp {

namespace {

constexpr int kMaxHermiteOrder = 64;
constexpr double kMaxTensorPoints = 1e7;
constexpr double kDropWeight = 1e-15;
constexpr double kSqrtJitter = 1e-10;

// Normalized probabilists' Hermite values h_k = He_k / √(k!) at x, for k = p-1 and p.
void normalized_hermite(int p, double x, double& h_prev, double& h_p) {
  double h0 = 1.0;
  double h1 = x;
  if (p == 0) {
    h_prev = 0.0;
    h_p = 1.0;
    return;
  }
  for (int k = 1; k < p; ++k) {
    const double h2 = (x * h1 - std::sqrt(static_cast<double>(k)) * h0) / std::sqrt(k + 1.0);
    h0 = h1;
    h1 = h2;
  }
  h_prev = h0;
  h_p = h1;
}

// Enumerates all level multi-indices i ∈ ℕ₊^d with |i| = total, in lexicographic order.
void enumerate_levels(int d, std::vector<int>& cur, int pos, int remaining,
                      std::vector<std::vector<int>>& out) {
  if (pos == d - 1) {
    if (remaining >= 1) {
      cur[pos] = remaining;
      out.push_back(cur);
    }
    return;
  }
  for (int v = 1; v <= remaining - (d - 1 - pos); ++v) {
    cur[pos] = v;
    enumerate_levels(d, cur, pos + 1, remaining - v, out);
  }
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int j = 1; j <= k; ++j) r = r * (n - k + j) / j;
  return r;
}

}  // namespace

QuadratureRule hermite_rule_1d(int p) {
  if (p < 1 || p > kMaxHermiteOrder) {
    throw std::invalid_argument("hermite_rule_1d: order must be in [1, 64], got " + std::to_string(p));
  }
  // Golub–Welsch initial guess: eigenvalues of the Jacobi matrix with off-diagonal √k.
  Matrix jacobi = Matrix::Zero(p, p);
  for (int k = 1; k < p; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi, Eigen::EigenvaluesOnly);
  std::vector<double> nodes(eig.eigenvalues().data(), eig.eigenvalues().data() + p);

  std::vector<double> weights(p);
  for (int k = 0; k < p; ++k) {
    double x = nodes[k];
    // Newton polish: d/dx h_p = √p · h_{p-1}.
    for (int iter = 0; iter < 10; ++iter) {
      double hm = 0.0;
      double hp = 0.0;
      normalized_hermite(p, x, hm, hp);
      const double dx = hp / (std::sqrt(static_cast<double>(p)) * hm);
      x -= dx;
      if (std::abs(dx) <= 1e-15 * std::max(1.0, std::abs(x))) break;
    }
    nodes[k] = x;
    double hm = 0.0;
    double hp = 0.0;
    normalized_hermite(p, x, hm, hp);
    // W = (p-1)! / (p · He_{p-1}(x)²) = 1 / (p · h_{p-1}(x)²)
    weights[k] = 1.0 / (p * hm * hm);
  }
  // Enforce exact ± symmetry and normalization.
  for (int k = 0; k < p / 2; ++k) {
    const int j = p - 1 - k;
    const double x = 0.5 * (nodes[j] - nodes[k]);
    const double w = 0.5 * (weights[j] + weights[k]);
    nodes[k] = -x;
    nodes[j] = x;
    weights[k] = w;
    weights[j] = w;
  }
  if (p % 2 == 1) nodes[p / 2] = 0.0;
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;

  QuadratureRule rule;
  rule.exact_degree = 2 * p - 1;
  rule.weights = std::move(weights);
  rule.points.reserve(p);
  for (double x : nodes) rule.points.push_back(Vector::Constant(1, x));
  return rule;
}

QuadratureRule tensor_rule(int p, int d) {
  if (d < 1) throw std::invalid_argument("tensor_rule: dimension must be >= 1");
  if (std::pow(static_cast<double>(p), d) > kMaxTensorPoints) {
    throw std::invalid_argument("tensor_rule: p^d exceeds the 1e7 point guard");
  }
  const auto base = hermite_rule_1d(p);
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(p);

  QuadratureRule rule;
  rule.exact_degree = base.exact_degree;
  rule.points.reserve(total);
  rule.weights.reserve(total);
  std::vector<int> idx(d, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vector x(d);
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      x(a) = base.points[idx[a]](0);
      w *= base.weights[idx[a]];
    }
    rule.points.push_back(std::move(x));
    rule.weights.push_back(w);
    // Last axis fastest.
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < p) break;
      idx[a] = 0;
    }
  }
  return rule;
}

QuadratureRule smolyak_rule(int k_q, int d) {
  if (k_q < 1) throw std::invalid_argument("smolyak_rule: level must be >= 1");
  if (d < 1) throw std::invalid_argument("smolyak_rule: dimension must be >= 1");

  std::vector<QuadratureRule> base;
  base.reserve(k_q);
  for (int l = 1; l <= k_q; ++l) base.push_back(hermite_rule_1d(l));

  // Exact-key merge keeps the output order deterministic (lexicographic in ξ).
  std::map<std::vector<double>, double> merged;
  const int q = k_q + d - 1;
  for (int total = std::max(d, q - d + 1); total <= q; ++total) {
    const double coeff = ((q - total) % 2 == 0 ? 1.0 : -1.0) * binomial(d - 1, q - total);
    if (coeff == 0.0) continue;
    std::vector<std::vector<int>> levels;
    std::vector<int> cur(d, 1);
    enumerate_levels(d, cur, 0, total, levels);
    for (const auto& lv : levels) {
      std::vector<int> idx(d, 0);
      while (true) {
        std::vector<double> key(d);
        double w = coeff;
        for (int a = 0; a < d; ++a) {
          const auto& r = base[lv[a] - 1];
          key[a] = r.points[idx[a]](0);
          w *= r.weights[idx[a]];
        }
        merged[key] += w;
        int a = d - 1;
        for (; a >= 0; --a) {
          if (++idx[a] < lv[a]) break;
          idx[a] = 0;
        }
        if (a < 0) break;
      }
    }
  }

  QuadratureRule rule;
  rule.exact_degree = 2 * k_q - 1;
  for (const auto& [key, w] : merged) {
    if (std::abs(w) < kDropWeight) continue;
    rule.points.push_back(Eigen::Map<const Vector>(key.data(), d));
    rule.weights.push_back(w);
  }
  return rule;
}

Matrix covariance_sqrt(const Matrix& p) {
  if (p.rows() != p.cols()) throw std::invalid_argument("covariance_sqrt: matrix must be square");
  const Matrix s = symmetrize(p);
  if (auto l = cholesky_lower(s)) return *l;
  const auto n = s.rows();
  if (auto l = cholesky_lower(s + kSqrtJitter * Matrix::Identity(n, n))) return *l;

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericalError("covariance_sqrt: eigendecomposition failed");
  const Vector& lambda = eig.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda.minCoeff() < -1e-8 * scale) {
    throw NumericalError("covariance_sqrt: matrix is not positive semidefinite (min eigenvalue " +
                         std::to_string(lambda.minCoeff()) + ")");
  }
  return eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace gvimp
