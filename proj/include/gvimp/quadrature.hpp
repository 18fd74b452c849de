#pragma once

#include "gvimp/gaussian.hpp"

#include <stdexcept>
#include <type_traits>
#include <vector>

namespace gvimp {

/// Sigma points ξ_l in standard-normal space with weights W_l. Smolyak rules
/// carry negative weights; never assume positivity.
struct QuadratureRule {
  std::vector<Vector> points;
  std::vector<double> weights;
  int exact_degree = 0;

  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  std::size_t size() const { return points.size(); }
};

/// p-point Gauss–Hermite rule for N(0, 1) (probabilists' convention), 1 ≤ p ≤ 64.
QuadratureRule hermite_rule_1d(int p);

/// Cartesian product of p-point rules in d dimensions. Throws if p^d > 1e7.
QuadratureRule tensor_rule(int p, int d);

/// Smolyak sparse grid of level k_q over non-nested Gauss–Hermite rules,
/// exact up to total degree 2·k_q − 1.
QuadratureRule smolyak_rule(int k_q, int d);

/// Square root L of P with L Lᵀ = P: Cholesky, then Cholesky with 1e-10·I jitter,
/// then a symmetric eigendecomposition root with eigenvalues floored at 0.
/// Throws NumericalError when P is significantly indefinite.
Matrix covariance_sqrt(const Matrix& p);

/// Σ_l W_l φ(L ξ_l + m), accumulated in ascending point index. φ may return a
/// scalar or an Eigen vector/matrix.
template <typename Fn>
auto expect(const QuadratureRule& rule, Fn&& phi, const Vector& m, const Matrix& p) {
  if (m.size() != rule.dim() || p.rows() != m.size() || p.cols() != m.size()) {
    throw std::invalid_argument("expect: dimension mismatch");
  }
  const Matrix l = covariance_sqrt(p);
  using Value = std::decay_t<decltype(phi(m))>;
  Value acc{};
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Vector x = l * rule.points[k] + m;
    if constexpr (std::is_arithmetic_v<Value>) {
      acc += rule.weights[k] * phi(x);
    } else {
      auto v = phi(x);
      if (k == 0) {
        acc = rule.weights[k] * v;
      } else {
        acc += rule.weights[k] * v;
      }
    }
  }
  return acc;
}

}  // namespace gvimp
