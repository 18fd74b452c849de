#include "gvimp/optimizer.hpp"

#include "gvimp/errors.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <string>

namespace gvimp {

namespace {

constexpr double kBisectionWidth = 1e-3;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

// Σ_ij A_ij B_ij over the block-tridiagonal pattern of A, with B given as
// the GBP blocks of a symmetric matrix.
double trace_product(const BlockTridiagonalMatrix& a, const ChainMarginals& b) {
  double tr = 0.0;
  for (int i = 0; i < a.num_blocks(); ++i) {
    tr += a.diag(i).cwiseProduct(b.diag[i]).sum();
    if (i + 1 < a.num_blocks()) tr += 2.0 * a.upper(i).cwiseProduct(b.cross[i]).sum();
  }
  return tr;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(kl_bound > 0.0)) throw ConfigError("optimizer: kl_bound must be positive");
  if (!(beta_min > 0.0) || !(beta_min < beta_max)) {
    throw ConfigError("optimizer: need 0 < beta_min < beta_max");
  }
  if (!(temperature_low > 0.0) || !(temperature_high > 0.0)) {
    throw ConfigError("optimizer: temperatures must be positive");
  }
  if (max_iters < 0) throw ConfigError("optimizer: max_iters must be >= 0");
  if (!(tol_mean >= 0.0) || !(tol_cost >= 0.0)) throw ConfigError("optimizer: tolerances must be >= 0");
  if (quadrature_level < 1) throw ConfigError("optimizer: quadrature_level must be >= 1");
  if (!(init_cov_scale > 0.0)) throw ConfigError("optimizer: init_cov_scale must be positive");
  if (threads < 0) throw ConfigError("optimizer: threads must be >= 0");
}

QuadratureRule make_rule(const OptimizerConfig& cfg, int dim) {
  return cfg.quadrature == QuadratureKind::Smolyak ? smolyak_rule(cfg.quadrature_level, dim)
                                                   : tensor_rule(cfg.quadrature_level, dim);
}

CostBreakdown cost_breakdown(const JointGaussian& cur, const ChainMarginals& marg, const DiscretePrior& prior,
                             double collision, double temperature) {
  const Vector delta = cur.mean - prior.mean;
  const double dim = static_cast<double>(cur.mean.size());
  CostBreakdown c;
  c.prior = 0.5 * delta.dot(prior.prec.multiply(delta)) + 0.5 * trace_product(prior.prec, marg);
  c.collision = collision;
  const double entropy = 0.5 * (dim * std::log(2.0 * std::numbers::pi * std::numbers::e) -
                                logdet_block_tridiag(cur.prec));
  c.entropy = -temperature * entropy;
  c.total = c.prior + c.collision + c.entropy;
  if (!std::isfinite(c.total)) throw NumericalError("cost_breakdown: non-finite cost");
  return c;
}

CostBreakdown cost_breakdown(const JointGaussian& cur, const DiscretePrior& prior, const SignedDistanceField& sdf,
                             const CollisionModel& model, const QuadratureRule& rule, double temperature,
                             int threads) {
  const auto marg = gbp_marginals(cur.prec);
  const auto maps = collision_maps(cur.num_states());
  double collision = 0.0;
  for (const auto& f : evaluate_all_factors(cur, marg, maps, sdf, model, rule, threads)) collision += f.e_psi;
  return cost_breakdown(cur, marg, prior, collision, temperature);
}

JointGaussian proximal_update(const JointGaussian& cur, const DiscretePrior& prior, const JointGradients& grads,
                              double beta, double temperature) {
  if (!(beta > 0.0)) throw std::invalid_argument("proximal_update: beta must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("proximal_update: temperature must be positive");
  const double inv_t = 1.0 / temperature;
  const double inv_b = 1.0 / beta;

  // (K⁻¹/T̂ + Λ_k/β)
  BlockTridiagonalMatrix lhs = inv_t * prior.prec;
  lhs += inv_b * cur.prec;
  lhs.symmetrize_blocks();

  Vector rhs = prior.prec.multiply(prior.mean) * inv_t + cur.prec.multiply(cur.mean) * inv_b;
  rhs.noalias() -= inv_t * grads.g_mu;

  auto chol = BlockTridiagonalCholesky::try_factor(lhs);
  if (!chol) throw NumericalError("proximal_update: mean system is not positive definite");

  BlockTridiagonalMatrix prec = (2.0 * inv_t) * grads.g_sigma;
  prec += lhs;
  prec *= beta / (beta + 1.0);
  prec.symmetrize_blocks();
  return {chol->solve(rhs), std::move(prec)};
}

std::optional<double> joint_kl(const JointGaussian& p, const JointGaussian& q) {
  auto chol_p = BlockTridiagonalCholesky::try_factor(p.prec);
  if (!chol_p) return std::nullopt;
  const double logdet_q = logdet_block_tridiag(q.prec);
  ChainMarginals marg;
  try {
    marg = gbp_marginals(p.prec);
  } catch (const NumericalError&) {
    return std::nullopt;
  }
  const Vector delta = p.mean - q.mean;
  // tr(Λ_q Σ_p) − D taken as tr((Λ_q − Λ_p) Σ_p), which stays accurate when Λ_p is badly conditioned.
  const double trace_gap = trace_product(q.prec + (-1.0) * p.prec, marg);
  const double mean_term = delta.dot(q.prec.multiply(delta));
  const double logdet_gap = chol_p->log_determinant() - logdet_q;
  const double kl = 0.5 * (trace_gap + mean_term + logdet_gap);
  // A clearly negative value means the terms cancelled below working precision.
  const double scale = std::abs(trace_gap) + mean_term + std::abs(logdet_gap);
  if (kl < -1e-6 * std::max(1.0, scale)) return std::nullopt;
  return std::max(kl, 0.0);
}

StepChoice select_step_size(const JointGaussian& cur, const DiscretePrior& prior, const JointGradients& grads,
                            const OptimizerConfig& cfg, double temperature) {
  auto attempt = [&](double beta) -> std::optional<StepChoice> {
    JointGaussian next;
    try {
      next = proximal_update(cur, prior, grads, beta, temperature);
    } catch (const NumericalError&) {
      return std::nullopt;
    }
    const auto kl = joint_kl(next, cur);
    if (!kl || *kl > cfg.kl_bound) return std::nullopt;
    return StepChoice{beta, *kl, std::move(next)};
  };

  if (auto best = attempt(cfg.beta_max)) return std::move(*best);
  auto best = attempt(cfg.beta_min);
  if (!best) {
    std::string why = "precision not SPD or KL lost to rounding";
    try {
      const auto kl = joint_kl(proximal_update(cur, prior, grads, cfg.beta_min, temperature), cur);
      if (kl) why = "KL " + std::to_string(*kl) + " > " + std::to_string(cfg.kl_bound);
    } catch (const NumericalError& e) {
      why = e.what();
    }
    throw NumericalError("select_step_size: no feasible step at beta_min = " + std::to_string(cfg.beta_min) + " (" +
                         why + ")");
  }
  double lo = cfg.beta_min;
  double hi = cfg.beta_max;
  while ((hi - lo) / hi > kBisectionWidth) {
    const double mid = 0.5 * (lo + hi);
    if (auto s = attempt(mid)) {
      lo = mid;
      best = std::move(s);
    } else {
      hi = mid;
    }
  }
  return std::move(*best);
}

Vector interpolate_mean(const Vector& start, const Vector& goal, int num_states, int position_dim,
                        const std::vector<Vector>& waypoints, bool fill_velocity, double dt) {
  const int n = static_cast<int>(start.size());
  if (goal.size() != n || num_states < 2 || position_dim < 1 || position_dim > n) {
    throw std::invalid_argument("interpolate_mean: inconsistent dimensions");
  }
  if (fill_velocity && 2 * position_dim > n) throw std::invalid_argument("interpolate_mean: no velocity block");

  std::vector<Vector> path{start.head(position_dim)};
  for (const auto& w : waypoints) {
    if (w.size() != position_dim) throw std::invalid_argument("interpolate_mean: waypoint dimension mismatch");
    path.push_back(w);
  }
  path.push_back(goal.head(position_dim));
  std::vector<double> arc{0.0};
  for (std::size_t k = 1; k < path.size(); ++k) arc.push_back(arc.back() + (path[k] - path[k - 1]).norm());
  const double length = arc.back();

  const int last = num_states - 1;
  Vector mean(num_states * n);
  for (int i = 0; i < num_states; ++i) {
    const double t = static_cast<double>(i) / last;
    Vector x = (1.0 - t) * start + t * goal;
    if (length > 0.0) {
      const double s = t * length;
      std::size_t seg = 1;
      while (seg + 1 < path.size() && arc[seg] < s) ++seg;
      const double span = arc[seg] - arc[seg - 1];
      const double u = span > 0.0 ? (s - arc[seg - 1]) / span : 0.0;
      x.head(position_dim) = (1.0 - u) * path[seg - 1] + u * path[seg];
    }
    mean.segment(i * n, n) = x;
  }
  if (fill_velocity) {
    for (int i = 1; i < last; ++i) {
      mean.segment(i * n + position_dim, position_dim) =
          (mean.segment((i + 1) * n, position_dim) - mean.segment((i - 1) * n, position_dim)) / (2.0 * dt);
    }
  }
  mean.head(n) = start;
  mean.tail(n) = goal;
  return mean;
}

RunResult run_pgvimp(const DiscretePrior& prior, const SignedDistanceField& sdf, const CollisionModel& model,
                     const OptimizerConfig& cfg, const Vector& init_mean,
                     const std::optional<BlockTridiagonalMatrix>& init_prec, const IterateObserver& observer) {
  cfg.validate();
  model.validate();
  const auto run_start = std::chrono::steady_clock::now();
  const int states = prior.num_states();
  const int n = prior.state_dim();
  if (init_mean.size() != states * n) throw std::invalid_argument("run_pgvimp: initial mean dimension mismatch");

  JointGaussian cur{init_mean, init_prec ? *init_prec : (1.0 / cfg.init_cov_scale) * prior.prec};
  if (cur.prec.num_blocks() != states || cur.prec.block_size() != n) {
    throw std::invalid_argument("run_pgvimp: initial precision shape mismatch");
  }

  const auto rule = make_rule(cfg, n);
  const auto maps = collision_maps(states);
  const double switch_tol = cfg.collision_switch_tol >= 0.0 ? cfg.collision_switch_tol : 1e-4 * (states - 1);

  RunResult result;
  bool high_phase = false;
  double temperature = cfg.temperature_low;
  double last_beta = 0.0;
  double last_kl = 0.0;
  double last_step = 0.0;
  Vector prev_mean;

  for (int k = 0;; ++k) {
    const auto iter_start = std::chrono::steady_clock::now();
    if (observer) observer(k, cur);
    auto marg = gbp_marginals(cur.prec);
    auto factors = evaluate_all_factors(cur, marg, maps, sdf, model, rule, cfg.threads);
    double collision = 0.0;
    for (const auto& f : factors) collision += f.e_psi;
    const auto cost = cost_breakdown(cur, marg, prior, collision, temperature);

    bool stalled = false;
    if (k > 0 && !result.log.empty() && result.log.back().temperature == temperature) {
      stalled = last_step < cfg.tol_mean && std::abs(cost.total - result.log.back().cost.total) < cfg.tol_cost;
    }

    IterationRecord rec{k, temperature, cost, last_beta, last_kl, last_step, 0.0};
    result.log.push_back(rec);

    if (!high_phase && (collision < switch_tol || stalled)) {
      high_phase = true;
      temperature = cfg.temperature_high;
      result.switches.push_back(k);
      stalled = false;
    } else if (high_phase && stalled) {
      result.converged = true;
    }

    const bool done = result.converged || k >= cfg.max_iters;
    if (done) {
      result.log.back().wall_ms = elapsed_ms(iter_start);
      result.final_temperature = temperature;
      result.final_cost = temperature == rec.temperature
                              ? cost
                              : cost_breakdown(cur, marg, prior, collision, temperature);
      result.joint = std::move(cur);
      result.marginals = std::move(marg);
      result.steps = k;
      break;
    }

    const auto grads = assemble_joint_gradients(factors, maps, states, n);
    auto step = select_step_size(cur, prior, grads, cfg, temperature);
    prev_mean = cur.mean;
    last_beta = step.beta;
    last_kl = step.kl;
    last_step = (step.next.mean - prev_mean).norm();
    cur = std::move(step.next);
    result.log.back().wall_ms = elapsed_ms(iter_start);
  }
  result.wall_ms = elapsed_ms(run_start);
  return result;
}

}  // namespace gvimp
