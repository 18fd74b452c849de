#include "gvimp/factor_graph.hpp"

#include "gvimp/errors.hpp"
#include "gvimp/parallel.hpp"

#include <algorithm>
#include <string>

namespace gvimp {

std::vector<MarginalMap> collision_maps(int num_states) {
  std::vector<MarginalMap> maps;
  for (int k = 1; k + 1 < num_states; ++k) {
    maps.push_back({static_cast<int>(maps.size()), k, 1});
  }
  return maps;
}

GaussianMoment extract_marginal(const JointGaussian& joint, const MarginalMap& map, const ChainMarginals& marg) {
  const int n = joint.state_dim();
  const int s = map.first_state;
  if (map.num_states < 1 || map.num_states > 2 || s < 0 || s + map.num_states > joint.num_states()) {
    throw std::out_of_range("extract_marginal: state range outside the trajectory");
  }
  if (static_cast<int>(marg.diag.size()) != joint.num_states()) {
    throw std::invalid_argument("extract_marginal: marginals do not match the joint");
  }
  if (map.num_states == 1) return {joint.state_mean(s), marg.diag[s]};

  Matrix cov(2 * n, 2 * n);
  cov.topLeftCorner(n, n) = marg.diag[s];
  cov.topRightCorner(n, n) = marg.cross[s];
  cov.bottomLeftCorner(n, n) = marg.cross[s].transpose();
  cov.bottomRightCorner(n, n) = marg.diag[s + 1];
  return {joint.mean.segment(s * n, 2 * n), cov};
}

FactorGradient collision_factor_gradients(const GaussianMoment& marg, const SignedDistanceField& sdf,
                                          const CollisionModel& model, const QuadratureRule& rule) {
  const int pos_dim = sdf.dim();
  if (marg.dim() < pos_dim) throw std::invalid_argument("collision factor: state has fewer coordinates than the SDF");
  auto g = potential_gradients(
      marg, [&](const Vector& x) { return hinge_cost(model, sdf.distance(x.head(pos_dim))); }, rule);
  g.e_psi = std::max(g.e_psi, 0.0);
  return g;
}

std::vector<FactorGradient> evaluate_all_factors(const JointGaussian& joint, const ChainMarginals& marg,
                                                 const std::vector<MarginalMap>& maps,
                                                 const SignedDistanceField& sdf, const CollisionModel& model,
                                                 const QuadratureRule& rule, int threads) {
  std::vector<FactorGradient> out(maps.size());
  parallel_for(maps.size(), resolve_threads(threads), [&](std::size_t k) {
    try {
      out[k] = collision_factor_gradients(extract_marginal(joint, maps[k], marg), sdf, model, rule);
    } catch (const std::exception& e) {
      throw NumericalError("factor " + std::to_string(maps[k].factor_index) + " (state " +
                           std::to_string(maps[k].first_state) + "): " + e.what());
    }
  });
  return out;
}

JointGradients assemble_joint_gradients(const std::vector<FactorGradient>& factors,
                                        const std::vector<MarginalMap>& maps, int num_states, int state_dim) {
  if (factors.size() != maps.size()) throw std::invalid_argument("assemble_joint_gradients: size mismatch");
  const int n = state_dim;
  JointGradients out{Vector::Zero(num_states * n), BlockTridiagonalMatrix::zeros(num_states, n)};
  for (std::size_t k = 0; k < factors.size(); ++k) {
    const auto& f = factors[k];
    const auto& m = maps[k];
    const int s = m.first_state;
    if (s < 0 || m.num_states < 1 || m.num_states > 2 || s + m.num_states > num_states) {
      throw std::out_of_range("assemble_joint_gradients: map outside the trajectory");
    }
    if (f.g_mu.size() != m.num_states * n || f.g_sigma.rows() != m.num_states * n) {
      throw std::invalid_argument("assemble_joint_gradients: factor gradient size mismatch");
    }
    out.g_mu.segment(s * n, m.num_states * n) += f.g_mu;
    out.g_sigma.diag(s) += f.g_sigma.topLeftCorner(n, n);
    if (m.num_states == 2) {
      out.g_sigma.upper(s) += f.g_sigma.topRightCorner(n, n);
      out.g_sigma.diag(s + 1) += f.g_sigma.bottomRightCorner(n, n);
    }
  }
  return out;
}

}  // namespace gvimp
