#pragma once

#include "gvimp/errors.hpp"
#include "gvimp/gaussian.hpp"
#include "gvimp/gbp.hpp"
#include "gvimp/quadrature.hpp"
#include "gvimp/sdf.hpp"

#include <stdexcept>
#include <vector>

namespace gvimp {

/// Selects states [first_state, first_state + num_states) of the joint trajectory.
struct MarginalMap {
  int factor_index = 0;
  int first_state = 0;
  int num_states = 1;
};

/// E[ψ] and the gradients of E[ψ] with respect to the marginal mean and covariance.
struct FactorGradient {
  double e_psi = 0.0;
  Vector g_mu;
  Matrix g_sigma;
};

struct JointGradients {
  Vector g_mu;
  BlockTridiagonalMatrix g_sigma;
};

/// One unary collision factor per interior knot 1..N−1.
std::vector<MarginalMap> collision_maps(int num_states);

/// (M μ, M Σ Mᵀ) for one or two adjacent states, read from GBP blocks.
GaussianMoment extract_marginal(const JointGaussian& joint, const MarginalMap& map, const ChainMarginals& marg);

/// Moment-form gradients of E[ψ] under N(m, Σ):
///   g_mu    = Σ⁻¹ E[(x−m) ψ]
///   g_sigma = ½ Σ⁻¹ (E[(x−m)(x−m)ᵀ ψ] − E[ψ] Σ) Σ⁻¹
/// evaluated in whitened coordinates x = m + Lξ, where they become
/// L⁻ᵀ E[ξψ] and ½ L⁻ᵀ (E[ξξᵀψ] − E[ψ] I) L⁻¹.
template <typename Potential>
FactorGradient potential_gradients(const GaussianMoment& marg, Potential&& psi, const QuadratureRule& rule);

/// ψ(x) = hinge_cost(distance(position(x))). e_psi is clamped at 0 since
/// sparse rules with negative weights can undershoot a nonnegative integrand.
FactorGradient collision_factor_gradients(const GaussianMoment& marg, const SignedDistanceField& sdf,
                                          const CollisionModel& model, const QuadratureRule& rule);

/// Collision factors for every map, computed on `threads` lanes (0 = all).
/// Results are bitwise independent of the thread count. A failing factor is
/// rethrown as NumericalError naming its index.
std::vector<FactorGradient> evaluate_all_factors(const JointGaussian& joint, const ChainMarginals& marg,
                                                 const std::vector<MarginalMap>& maps,
                                                 const SignedDistanceField& sdf, const CollisionModel& model,
                                                 const QuadratureRule& rule, int threads);

/// Σ_i M_iᵀ g_i scattered in ascending factor order.
JointGradients assemble_joint_gradients(const std::vector<FactorGradient>& factors,
                                        const std::vector<MarginalMap>& maps, int num_states, int state_dim);

// ---------------------------------------------------------------------------

template <typename Potential>
FactorGradient potential_gradients(const GaussianMoment& marg, Potential&& psi, const QuadratureRule& rule) {
  const auto d = marg.dim();
  if (rule.dim() != d) throw std::invalid_argument("potential_gradients: rule dimension mismatch");
  const Matrix l = covariance_sqrt(marg.cov());
  const Eigen::FullPivLU<Matrix> lu(l);
  if (!lu.isInvertible()) throw NumericalError("potential_gradients: marginal covariance is singular");

  double e_psi = 0.0;
  Vector e_xi = Vector::Zero(d);
  Matrix e_xixi = Matrix::Zero(d, d);
  Vector x(d);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Vector& xi = rule.points[k];
    x.noalias() = l * xi;
    x += marg.mean();
    const double v = psi(x);
    if (v == 0.0) continue;
    const double wv = rule.weights[k] * v;
    e_psi += wv;
    e_xi.noalias() += wv * xi;
    e_xixi.noalias() += wv * (xi * xi.transpose());
  }

  FactorGradient g;
  g.e_psi = e_psi;
  // L⁻ᵀ v = (Lᵀ)⁻¹ v
  const Matrix l_inv = lu.inverse();
  g.g_mu = l_inv.transpose() * e_xi;
  e_xixi.diagonal().array() -= e_psi;
  g.g_sigma = symmetrize(0.5 * l_inv.transpose() * e_xixi * l_inv);
  return g;
}

}  // namespace gvimp
