#include "gvimp/slr.hpp"

#include "gvimp/errors.hpp"
#include "gvimp/parallel.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>

namespace gvimp {

namespace {

constexpr double kRidge = 1e-9;
constexpr double kMinRcond = 1e-13;

}  // namespace

void NominalTrajectory::validate() const {
  if (means.size() < 2 || means.size() != covs.size()) {
    throw std::invalid_argument("nominal trajectory: need matching means and covariances for >= 2 knots");
  }
  for (std::size_t i = 0; i < covs.size(); ++i) {
    if (!is_positive_definite(symmetrize(covs[i]))) {
      throw std::invalid_argument("nominal trajectory: covariance " + std::to_string(i) + " is not SPD");
    }
  }
}

SlrFit slr_fit(const std::function<Vector(const Vector&)>& f, const Vector& mean, const Matrix& cov,
               const QuadratureRule& rule) {
  const auto d = mean.size();
  if (rule.dim() != d || cov.rows() != d || cov.cols() != d) throw std::invalid_argument("slr_fit: dimension mismatch");
  const Matrix l = covariance_sqrt(cov);

  std::vector<Vector> xs(rule.size());
  std::vector<Vector> ys(rule.size());
  Vector x_bar = Vector::Zero(d);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    xs[k] = l * rule.points[k] + mean;
    ys[k] = f(xs[k]);
    if (!ys[k].allFinite()) throw NumericalError("slr_fit: non-finite propagated sigma point");
    x_bar += rule.weights[k] * xs[k];
  }
  const auto m = ys.front().size();
  Vector y_bar = Vector::Zero(m);
  for (std::size_t k = 0; k < rule.size(); ++k) y_bar += rule.weights[k] * ys[k];

  Matrix p_xx = Matrix::Zero(d, d);
  Matrix p_yx = Matrix::Zero(m, d);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Vector dx = xs[k] - x_bar;
    p_xx.noalias() += rule.weights[k] * dx * dx.transpose();
    p_yx.noalias() += rule.weights[k] * (ys[k] - y_bar) * dx.transpose();
  }
  p_xx = symmetrize(p_xx);

  Eigen::LDLT<Matrix> ldlt(p_xx);
  if (ldlt.info() != Eigen::Success || !is_positive_definite(p_xx) || ldlt.rcond() < kMinRcond) {
    p_xx.diagonal().array() += kRidge;
    ldlt.compute(p_xx);
    if (ldlt.info() != Eigen::Success || !is_positive_definite(p_xx)) {
      throw NumericalError("slr_fit: P_xx singular after regularization");
    }
  }
  SlrFit fit;
  // A = P_yx P_xx⁻¹  ⇔  P_xx Aᵀ = P_yxᵀ
  fit.A = ldlt.solve(p_yx.transpose()).transpose();
  fit.a = y_bar - fit.A * x_bar;
  return fit;
}

LtvSystem slr_linearize(const NonlinearSystem& sys, const NominalTrajectory& nominal, double dt,
                        const QuadratureRule& rule, int threads) {
  nominal.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("slr_linearize: dt must be positive");
  const int n = sys.state_dim;
  const Matrix eye = Matrix::Identity(n, n);
  const auto f_cl = [&](const Vector& x) { return euler_step(sys, x, dt); };

  LtvSystem out;
  out.dt = dt;
  out.steps.resize(nominal.means.size());
  parallel_for(nominal.means.size(), resolve_threads(threads), [&](std::size_t i) {
    const auto fit = slr_fit(f_cl, nominal.means[i], nominal.covs[i], rule);
    out.steps[i] = {(fit.A - eye) / dt, fit.a / dt, sys.diffusion(nominal.means[i])};
  });
  out.validate();
  return out;
}

void OuterConfig::validate() const {
  if (max_outer < 1) throw ConfigError("outer: max_outer must be >= 1");
  if (!(norm_tol >= 0.0)) throw ConfigError("outer: norm_tol must be >= 0");
  if (!(nominal_cov > 0.0)) throw ConfigError("outer: nominal_cov must be positive");
}

OuterResult run_ipgvimp(const NonlinearSystem& sys, const NonlinearProblem& problem, const SignedDistanceField& sdf,
                        const CollisionModel& model, const OptimizerConfig& cfg, const OuterConfig& outer) {
  outer.validate();
  cfg.validate();
  const int n = sys.state_dim;
  const int intervals = problem.num_intervals;
  if (intervals < 2 || !(problem.total_time > 0.0)) throw ConfigError("i-P-GVIMP: need N >= 2 and T > 0");
  if (problem.start.size() != n || problem.goal.size() != n) throw ConfigError("i-P-GVIMP: boundary state size");
  const double dt = problem.total_time / intervals;
  const int states = intervals + 1;
  const auto rule = make_rule(cfg, n);

  NominalTrajectory nominal;
  for (int i = 0; i < states; ++i) {
    const double t = static_cast<double>(i) / intervals;
    nominal.means.push_back((1.0 - t) * problem.start + t * problem.goal);
    nominal.covs.push_back(outer.nominal_cov * Matrix::Identity(n, n));
  }
  // Waypoint detours start from a polyline, otherwise from the prior mean. With
  // warm starts later inner runs begin at the previous mean.
  std::optional<Vector> start_mean =
      problem.waypoints.empty()
          ? std::nullopt
          : std::optional<Vector>(interpolate_mean(problem.start, problem.goal, states, problem.position_dim,
                                                   problem.waypoints, false, dt));

  OuterResult result;
  for (int it = 1; it <= outer.max_outer; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto ltv = slr_linearize(sys, nominal, dt, rule, cfg.threads);
      const auto prior = assemble_prior(ltv, problem.start, problem.goal, problem.q_c, problem.boundary_sigma);
      result.last = run_pgvimp(prior, sdf, model, cfg, start_mean ? *start_mean : prior.mean);
    } catch (const NumericalError& e) {
      throw NumericalError("outer iteration " + std::to_string(it) + ": " + e.what());
    }

    NominalTrajectory next;
    double sq = 0.0;
    for (int i = 0; i < states; ++i) {
      next.means.push_back(result.last.joint.state_mean(i));
      next.covs.push_back(result.last.marginals.diag[i]);
      sq += (next.means.back() - nominal.means[i]).squaredNorm();
    }
    const double norm_diff = std::sqrt(sq);
    result.inner_logs.push_back(result.last.log);
    result.inner_switches.push_back(result.last.switches);
    result.log.push_back({it, norm_diff, result.last.steps, result.last.final_cost,
                          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count()});
    nominal = std::move(next);
    if (outer.warm_start) start_mean = result.last.joint.mean;
    if (norm_diff < outer.norm_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace gvimp
