#include "gvimp/experiment.hpp"

#include "gvimp/errors.hpp"
#include "gvimp/factor_graph.hpp"
#include "gvimp/gbp.hpp"
#include "gvimp/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace gvimp {

using nlohmann::json;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// --- config helpers --------------------------------------------------------

const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("missing field '" + where + key + "'");
  return j.at(key);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + where + key + "' has the wrong type");
  }
}

Vector to_vector(const json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError("field '" + field + "' must be a non-empty number array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ConfigError("field '" + field + "' must contain only numbers");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

std::vector<Vector> to_points(const json& j, const std::string& field) {
  std::vector<Vector> out;
  if (!j.is_array()) throw ConfigError("field '" + field + "' must be an array of points");
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(to_vector(j[k], field + "[" + std::to_string(k) + "]"));
  return out;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json cost_json(const CostBreakdown& c) {
  return {{"prior", c.prior}, {"collision", c.collision}, {"mp", c.mp()}, {"entropy", c.entropy}, {"total", c.total}};
}

NonlinearSystem nonlinear_system(const ExperimentConfig& cfg) {
  if (cfg.system == "planar_quadrotor") return planar_quadrotor();
  throw ConfigError("unknown nonlinear system '" + cfg.system + "'");
}

NonlinearProblem nonlinear_problem(const ExperimentConfig& cfg, const std::vector<Vector>& waypoints) {
  NonlinearProblem p;
  p.start = cfg.start;
  p.goal = cfg.goal;
  p.num_intervals = cfg.num_intervals;
  p.total_time = cfg.total_time;
  p.q_c = cfg.q_c;
  p.boundary_sigma = cfg.boundary_sigma;
  p.position_dim = cfg.position_dim();
  p.waypoints = waypoints;
  return p;
}

// Prior at the config's N for linear systems, or SLR around the straight
// line with the nominal covariance for nonlinear ones.
DiscretePrior bench_prior(const ExperimentConfig& cfg) {
  if (cfg.is_linear()) return build_linear_prior(cfg);
  const auto sys = nonlinear_system(cfg);
  NominalTrajectory nominal;
  const int n = sys.state_dim;
  for (int i = 0; i <= cfg.num_intervals; ++i) {
    const double t = static_cast<double>(i) / cfg.num_intervals;
    nominal.means.push_back((1.0 - t) * cfg.start + t * cfg.goal);
    nominal.covs.push_back(cfg.outer.nominal_cov * Matrix::Identity(n, n));
  }
  const auto ltv = slr_linearize(sys, nominal, cfg.dt(), make_rule(cfg.optimizer, n));
  return assemble_prior(ltv, cfg.start, cfg.goal, cfg.q_c, cfg.boundary_sigma);
}

void apply_overrides(ExperimentConfig& cfg, const CliOverrides& ov) {
  if (ov.threads) {
    if (*ov.threads < 0) throw ConfigError("--threads must be >= 0");
    cfg.optimizer.threads = *ov.threads;
  }
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.out) cfg.output = *ov.out;
}

std::filesystem::path prepare_output(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.output);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  }
}

void print_cost_header(std::ostream& out) {
  out << std::left << std::setw(14) << "plan" << std::right << std::setw(12) << "prior" << std::setw(12)
      << "collision" << std::setw(12) << "MP" << std::setw(12) << "entropy" << std::setw(12) << "total"
      << std::setw(12) << "clearance" << '\n';
}

void print_cost_row(std::ostream& out, const std::string& name, const PlanOutput& p) {
  const auto& c = p.run.final_cost;
  out << std::left << std::setw(14) << name << std::right << std::fixed << std::setprecision(4) << std::setw(12)
      << c.prior << std::setw(12) << c.collision << std::setw(12) << c.mp() << std::setw(12) << c.entropy
      << std::setw(12) << c.total << std::setw(12) << p.min_clearance << '\n';
  out.unsetf(std::ios::fixed);
}

}  // namespace

double Rng::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int ExperimentConfig::state_dim() const {
  if (system == "point2d") return 4;
  if (system == "point3d") return 6;
  if (system == "planar_quadrotor") return 6;
  throw ConfigError("unknown system '" + system + "'");
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  ExperimentConfig cfg;
  try {
    const auto& sys = require(j, "system", "");
    cfg.system = require(sys, "name", "system.").get<std::string>();
    cfg.q_c = get_or(sys, "q_c", cfg.q_c, "system.");
    const int n = cfg.state_dim();

    cfg.start = to_vector(require(j, "start", ""), "start");
    cfg.goal = to_vector(require(j, "goal", ""), "goal");
    if (cfg.start.size() != n || cfg.goal.size() != n) {
      throw ConfigError("start/goal must have " + std::to_string(n) + " entries for " + cfg.system);
    }
    cfg.num_intervals = get_or(j, "N", cfg.num_intervals, "");
    cfg.total_time = get_or(j, "total_time", cfg.total_time, "");
    cfg.boundary_sigma = get_or(j, "boundary_sigma", cfg.boundary_sigma, "");
    if (cfg.num_intervals < 2) throw ConfigError("N must be >= 2");
    if (!(cfg.total_time > 0.0)) throw ConfigError("total_time must be positive");
    if (!(cfg.boundary_sigma > 0.0)) throw ConfigError("boundary_sigma must be positive");
    if (!(cfg.q_c > 0.0)) throw ConfigError("system.q_c must be positive");

    const auto& env = require(j, "environment", "");
    const int pd = cfg.position_dim();
    if (env.contains("sdf_file")) {
      std::filesystem::path p = env.at("sdf_file").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw ConfigError("SDF file not found: " + p.string());
      cfg.sdf_file = p.string();
    } else {
      const auto& b = require(env, "bounds", "environment.");
      cfg.bounds.lower = to_vector(require(b, "lower", "environment.bounds."), "environment.bounds.lower");
      cfg.bounds.upper = to_vector(require(b, "upper", "environment.bounds."), "environment.bounds.upper");
      if (cfg.bounds.lower.size() != pd || cfg.bounds.upper.size() != pd) {
        throw ConfigError("environment.bounds must have " + std::to_string(pd) + " coordinates");
      }
      cfg.cell_size = get_or(env, "cell_size", cfg.cell_size, "environment.");
      if (!(cfg.cell_size > 0.0)) throw ConfigError("environment.cell_size must be positive");
      if (env.contains("primitives")) {
        const auto& prims = env.at("primitives");
        for (std::size_t k = 0; k < prims.size(); ++k) {
          const std::string where = "environment.primitives[" + std::to_string(k) + "].";
          const auto& pj = prims[k];
          Primitive prim;
          const auto type = require(pj, "type", where).get<std::string>();
          prim.center = to_vector(require(pj, "center", where), where + "center");
          if (prim.center.size() != pd) throw ConfigError(where + "center has the wrong dimension");
          if (type == "disc") {
            prim.kind = Primitive::Kind::Disc;
            prim.radius = require(pj, "radius", where).get<double>();
            if (!(prim.radius > 0.0)) throw ConfigError(where + "radius must be positive");
          } else if (type == "box") {
            prim.kind = Primitive::Kind::Box;
            prim.half_extents = to_vector(require(pj, "halfextents", where), where + "halfextents");
            if (prim.half_extents.size() != pd || prim.half_extents.minCoeff() <= 0.0) {
              throw ConfigError(where + "halfextents must be positive with one entry per axis");
            }
          } else {
            throw ConfigError(where + "type must be 'disc' or 'box'");
          }
          cfg.primitives.push_back(std::move(prim));
        }
      }
    }

    const json empty = json::object();
    const auto& col = j.contains("collision") ? j.at("collision") : empty;
    cfg.collision.radius_eps = get_or(col, "radius_eps", cfg.collision.radius_eps, "collision.");
    cfg.collision.sigma_obs = get_or(col, "sigma_obs", cfg.collision.sigma_obs, "collision.");
    try {
      cfg.collision.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }

    const auto& opt = j.contains("optimizer") ? j.at("optimizer") : empty;
    auto& o = cfg.optimizer;
    const std::string w = "optimizer.";
    o.kl_bound = get_or(opt, "kl_bound", o.kl_bound, w);
    o.beta_min = get_or(opt, "beta_min", o.beta_min, w);
    o.beta_max = get_or(opt, "beta_max", o.beta_max, w);
    o.temperature_low = get_or(opt, "temperature_low", o.temperature_low, w);
    o.temperature_high = get_or(opt, "temperature_high", o.temperature_high, w);
    o.collision_switch_tol = get_or(opt, "collision_switch_tol", o.collision_switch_tol, w);
    o.max_iters = get_or(opt, "max_iters", o.max_iters, w);
    o.tol_mean = get_or(opt, "tol_mean", o.tol_mean, w);
    o.tol_cost = get_or(opt, "tol_cost", o.tol_cost, w);
    o.quadrature_level = get_or(opt, "quadrature_level", o.quadrature_level, w);
    o.init_cov_scale = get_or(opt, "init_cov_scale", o.init_cov_scale, w);
    const auto quad = get_or(opt, "quadrature", std::string("smolyak"), w);
    if (quad == "smolyak") {
      o.quadrature = QuadratureKind::Smolyak;
    } else if (quad == "tensor") {
      o.quadrature = QuadratureKind::Tensor;
    } else {
      throw ConfigError("optimizer.quadrature must be 'smolyak' or 'tensor'");
    }
    o.threads = get_or(j, "threads", o.threads, "");
    o.validate();

    const auto& init = j.contains("init") ? j.at("init") : empty;
    const auto kind = get_or(init, "kind", std::string("interpolation"), "init.");
    if (kind == "interpolation") {
      cfg.init = InitKind::Interpolation;
    } else if (kind == "prior") {
      cfg.init = InitKind::Prior;
    } else if (kind == "waypoints") {
      cfg.init = InitKind::Waypoints;
    } else {
      throw ConfigError("init.kind must be 'interpolation', 'prior' or 'waypoints'");
    }
    if (init.contains("waypoints")) cfg.waypoints = to_points(init.at("waypoints"), "init.waypoints");
    for (const auto& wp : cfg.waypoints) {
      if (wp.size() != pd) throw ConfigError("init.waypoints entries must have " + std::to_string(pd) + " coordinates");
    }

    const auto& outer = j.contains("outer") ? j.at("outer") : empty;
    cfg.outer.max_outer = get_or(outer, "max_outer", cfg.outer.max_outer, "outer.");
    cfg.outer.norm_tol = get_or(outer, "norm_tol", cfg.outer.norm_tol, "outer.");
    cfg.outer.nominal_cov = get_or(outer, "nominal_cov", cfg.outer.nominal_cov, "outer.");
    cfg.outer.warm_start = get_or(outer, "warm_start", cfg.outer.warm_start, "outer.");
    cfg.outer.validate();

    if (j.contains("modes")) {
      const auto& modes = j.at("modes");
      for (std::size_t k = 0; k < modes.size(); ++k) {
        const std::string where = "modes[" + std::to_string(k) + "].";
        PlanMode m;
        m.name = require(modes[k], "name", where).get<std::string>();
        if (modes[k].contains("waypoints")) m.waypoints = to_points(modes[k].at("waypoints"), where + "waypoints");
        for (const auto& wp : m.waypoints) {
          if (wp.size() != pd) throw ConfigError(where + "waypoints have the wrong dimension");
        }
        cfg.modes.push_back(std::move(m));
      }
    }

    const auto& bench = j.contains("bench") ? j.at("bench") : empty;
    cfg.bench.repetitions = get_or(bench, "repetitions", cfg.bench.repetitions, "bench.");
    cfg.bench.sweep = get_or(bench, "sweep", cfg.bench.sweep, "bench.");
    if (cfg.bench.repetitions < 1) throw ConfigError("bench.repetitions must be >= 1");
    for (int s : cfg.bench.sweep) {
      if (s < 2) throw ConfigError("bench.sweep entries must be >= 2");
    }

    cfg.seed = get_or(j, "seed", cfg.seed, "");
    cfg.init_noise = get_or(j, "init_noise", cfg.init_noise, "");
    if (!(cfg.init_noise >= 0.0)) throw ConfigError("init_noise must be >= 0");
    cfg.output = get_or(j, "output", cfg.output, "");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

SignedDistanceField build_environment(const ExperimentConfig& cfg) {
  if (cfg.sdf_file) {
    auto sdf = load_sdf(*cfg.sdf_file);
    if (sdf.dim() != cfg.position_dim()) throw ConfigError("SDF dimension does not match the system: " + *cfg.sdf_file);
    return sdf;
  }
  return rasterize(cfg.primitives, cfg.bounds, cfg.cell_size);
}

DiscretePrior build_linear_prior(const ExperimentConfig& cfg) {
  if (!cfg.is_linear()) throw ConfigError("system '" + cfg.system + "' is not linear");
  const auto sys = LtvSystem::constant(point_robot_lti(cfg.position_dim()), cfg.num_intervals, cfg.dt());
  return assemble_prior(sys, cfg.start, cfg.goal, cfg.q_c, cfg.boundary_sigma);
}

Vector initial_mean(const ExperimentConfig& cfg, const DiscretePrior& prior, const std::vector<Vector>& waypoints) {
  Vector mean = cfg.init == InitKind::Prior && waypoints.empty()
                    ? prior.mean
                    : interpolate_mean(cfg.start, cfg.goal, cfg.num_intervals + 1, cfg.position_dim(), waypoints,
                                       cfg.is_linear(), cfg.dt());
  if (cfg.init_noise > 0.0) {
    Rng rng(cfg.seed);
    const int n = cfg.state_dim();
    for (int i = 1; i < cfg.num_intervals; ++i) {
      for (int a = 0; a < cfg.position_dim(); ++a) mean(i * n + a) += cfg.init_noise * rng.normal();
    }
  }
  return mean;
}

PlanOutput execute_plan(const ExperimentConfig& cfg, const SignedDistanceField& sdf,
                        const std::vector<Vector>& waypoints) {
  PlanOutput out;
  const long oob_before = sdf.out_of_bounds_count();
  if (cfg.is_linear()) {
    const auto prior = build_linear_prior(cfg);
    out.run = run_pgvimp(prior, sdf, cfg.collision, cfg.optimizer, initial_mean(cfg, prior, waypoints));
  } else {
    if (cfg.init_noise > 0.0) throw ConfigError("init_noise is only supported for point robots");
    out.outer = run_ipgvimp(nonlinear_system(cfg), nonlinear_problem(cfg, waypoints), sdf, cfg.collision,
                            cfg.optimizer, cfg.outer);
    out.run = out.outer->last;
  }
  std::vector<Vector> means;
  for (int i = 0; i < out.run.joint.num_states(); ++i) means.push_back(out.run.joint.state_mean(i));
  out.min_clearance = min_clearance(means, sdf, cfg.collision);
  out.out_of_bounds = sdf.out_of_bounds_count() - oob_before;
  return out;
}

std::vector<double> pack_lower(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.rows() * (m.rows() + 1) / 2));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c <= r; ++c) out.push_back(m(r, c));
  }
  return out;
}

Matrix unpack_lower(const std::vector<double>& packed) {
  const auto n = static_cast<Eigen::Index>(std::llround((std::sqrt(8.0 * packed.size() + 1.0) - 1.0) / 2.0));
  if (static_cast<std::size_t>(n * (n + 1) / 2) != packed.size()) {
    throw std::invalid_argument("unpack_lower: length is not triangular");
  }
  Matrix m(n, n);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c <= r; ++c) {
      m(r, c) = packed[k];
      m(c, r) = packed[k];
      ++k;
    }
  }
  return m;
}

json result_json(const ExperimentConfig& cfg, const PlanOutput& plan) {
  const auto& joint = plan.run.joint;
  json means = json::array();
  json covs = json::array();
  for (int i = 0; i < joint.num_states(); ++i) {
    means.push_back(to_json(joint.state_mean(i)));
    covs.push_back(pack_lower(plan.run.marginals.diag[i]));
  }
  json j = {
      {"schema_version", kResultSchemaVersion},
      {"system", cfg.system},
      {"N", cfg.num_intervals},
      {"state_dim", joint.state_dim()},
      {"total_time", cfg.total_time},
      {"dt", cfg.dt()},
      {"seed", cfg.seed},
      {"converged", plan.run.converged},
      {"steps", plan.run.steps},
      {"temperature", plan.run.final_temperature},
      {"mean", std::move(means)},
      {"covariance_layout", "lower_packed_row_major"},
      {"covariances", std::move(covs)},
      {"cost", cost_json(plan.run.final_cost)},
      {"min_clearance", plan.min_clearance},
      {"out_of_bounds_queries", plan.out_of_bounds},
  };
  if (plan.outer) {
    json norms = json::array();
    for (const auto& r : plan.outer->log) norms.push_back(r.norm_diff);
    j["outer_iterations"] = plan.outer->log.size();
    j["outer_converged"] = plan.outer->converged;
    j["norm_differences"] = std::move(norms);
  }
  return j;
}

void write_costs_jsonl(std::ostream& out, const PlanOutput& plan) {
  const auto emit_inner = [&](int outer, const std::vector<IterationRecord>& log, const std::vector<int>& switches) {
    std::size_t next_switch = 0;
    for (const auto& r : log) {
      json rec = {{"type", "iter"},
                  {"outer", outer},
                  {"iter", r.iter},
                  {"temperature", r.temperature},
                  {"beta", r.beta},
                  {"kl", r.kl_step},
                  {"mean_step", r.mean_step},
                  {"wall_ms", r.wall_ms}};
      rec.update(cost_json(r.cost));
      out << rec.dump() << '\n';
      if (next_switch < switches.size() && switches[next_switch] == r.iter) {
        out << json{{"type", "switch"}, {"outer", outer}, {"iter", r.iter}}.dump() << '\n';
        ++next_switch;
      }
    }
  };
  if (!plan.outer) {
    emit_inner(0, plan.run.log, plan.run.switches);
    return;
  }
  for (std::size_t k = 0; k < plan.outer->log.size(); ++k) {
    const auto& o = plan.outer->log[k];
    emit_inner(o.outer, plan.outer->inner_logs[k], plan.outer->inner_switches[k]);
    json rec = {{"type", "outer"}, {"outer", o.outer}, {"norm_diff", o.norm_diff}, {"inner_steps", o.inner_steps},
                {"wall_ms", o.wall_ms}};
    rec.update(cost_json(o.cost));
    out << rec.dump() << '\n';
  }
}

BenchRow bench_factors(const ExperimentConfig& base, int N, int threads, bool* identical) {
  ExperimentConfig cfg = base;
  cfg.num_intervals = N;
  const auto prior = bench_prior(cfg);
  const auto sdf = build_environment(cfg);
  const int n = prior.state_dim();
  JointGaussian joint{initial_mean(cfg, prior, cfg.waypoints), (1.0 / cfg.optimizer.init_cov_scale) * prior.prec};
  const auto marg = gbp_marginals(joint.prec);
  const auto maps = collision_maps(joint.num_states());
  const auto rule = make_rule(cfg.optimizer, n);

  std::vector<double> serial;
  std::vector<double> parallel;
  std::vector<FactorGradient> ref;
  std::vector<FactorGradient> par;
  for (int r = 0; r < cfg.bench.repetitions; ++r) {
    double t0 = now_ms();
    ref = evaluate_all_factors(joint, marg, maps, sdf, cfg.collision, rule, 1);
    serial.push_back(now_ms() - t0);
    t0 = now_ms();
    par = evaluate_all_factors(joint, marg, maps, sdf, cfg.collision, rule, threads);
    parallel.push_back(now_ms() - t0);
  }
  if (identical) {
    bool same = ref.size() == par.size();
    for (std::size_t k = 0; same && k < ref.size(); ++k) {
      same = std::memcmp(&ref[k].e_psi, &par[k].e_psi, sizeof(double)) == 0 && ref[k].g_mu == par[k].g_mu &&
             ref[k].g_sigma == par[k].g_sigma;
    }
    *identical = same;
  }
  return {"factors", N, n, cfg.optimizer.quadrature_level, median(serial), median(parallel)};
}

BenchRow bench_gbp(const ExperimentConfig& base, int N, double* max_rel_err) {
  ExperimentConfig cfg = base;
  cfg.num_intervals = N;
  const auto prior = bench_prior(cfg);
  const int n = prior.state_dim();
  const auto prec = (1.0 / cfg.optimizer.init_cov_scale) * prior.prec;

  double t0 = now_ms();
  const Matrix dense = prec.to_dense();
  const Eigen::LLT<Matrix> llt(dense);
  if (llt.info() != Eigen::Success) throw NumericalError("bench gbp: dense precision not SPD");
  const Matrix inv = llt.solve(Matrix::Identity(dense.rows(), dense.cols()));
  const double dense_ms = now_ms() - t0;

  t0 = now_ms();
  const auto marg = gbp_marginals(prec);
  const double gbp_ms = now_ms() - t0;

  if (max_rel_err) {
    double worst = 0.0;
    for (int i = 0; i < prec.num_blocks(); ++i) {
      const Matrix ref = inv.block(i * n, i * n, n, n);
      worst = std::max(worst, (marg.diag[i] - ref).norm() / ref.norm());
      if (i + 1 < prec.num_blocks()) {
        const Matrix cref = inv.block(i * n, (i + 1) * n, n, n);
        worst = std::max(worst, (marg.cross[i] - cref).norm() / std::max(cref.norm(), ref.norm()));
      }
    }
    *max_rel_err = worst;
  }
  return {"gbp", N, n, 0, dense_ms, gbp_ms};
}

BenchRow bench_full(const ExperimentConfig& base, int threads) {
  ExperimentConfig cfg = base;
  const auto sdf = build_environment(cfg);
  cfg.optimizer.threads = 1;
  double t0 = now_ms();
  execute_plan(cfg, sdf, cfg.init == InitKind::Waypoints ? cfg.waypoints : std::vector<Vector>{});
  const double serial = now_ms() - t0;
  cfg.optimizer.threads = threads;
  t0 = now_ms();
  execute_plan(cfg, sdf, cfg.init == InitKind::Waypoints ? cfg.waypoints : std::vector<Vector>{});
  const double parallel = now_ms() - t0;
  return {"full", cfg.num_intervals, cfg.state_dim(), cfg.optimizer.quadrature_level, serial, parallel};
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "mode,N,n,k_q,serial_ms,parallel_ms,improvement_pct\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.mode << ',' << r.N << ',' << r.n << ',' << r.k_q << ',' << r.serial_ms << ',' << r.parallel_ms << ','
        << r.improvement_pct() << '\n';
  }
}

int cmd_plan(const std::string& config_path, const CliOverrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_config(config_path);
    apply_overrides(cfg, ov);
    const auto sdf = build_environment(cfg);
    const auto plan = execute_plan(cfg, sdf, cfg.init == InitKind::Waypoints ? cfg.waypoints : std::vector<Vector>{});
    const auto dir = prepare_output(cfg);
    write_file(dir / "result.json", result_json(cfg, plan).dump(2) + "\n");
    std::ostringstream costs;
    write_costs_jsonl(costs, plan);
    write_file(dir / "costs.jsonl", costs.str());

    print_cost_header(out);
    print_cost_row(out, cfg.system, plan);
    out << "steps " << plan.run.steps << (plan.run.converged ? " (converged)" : " (iteration limit)");
    if (plan.outer) out << ", outer iterations " << plan.outer->log.size();
    out << ", wall " << std::fixed << std::setprecision(1) << plan.run.wall_ms << " ms\n";
    out.unsetf(std::ios::fixed);
    if (plan.out_of_bounds > 0) out << "warning: " << plan.out_of_bounds << " SDF queries clamped to the border\n";
    out << "wrote " << (dir / "result.json").string() << " and " << (dir / "costs.jsonl").string() << '\n';
    return 0;
  });
}

int cmd_bench(const std::string& config_path, const std::string& mode, const CliOverrides& ov, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_config(config_path);
    apply_overrides(cfg, ov);
    const int threads = resolve_threads(cfg.optimizer.threads);
    std::vector<BenchRow> rows;
    std::vector<int> sizes = cfg.bench.sweep.empty() ? std::vector<int>{cfg.num_intervals} : cfg.bench.sweep;
    if (mode == "factors") {
      for (int N : sizes) {
        bool identical = false;
        rows.push_back(bench_factors(cfg, N, threads, &identical));
        if (!identical) throw NumericalError("serial and parallel factor results differ at N = " + std::to_string(N));
      }
    } else if (mode == "gbp") {
      for (int N : sizes) rows.push_back(bench_gbp(cfg, N));
    } else if (mode == "full") {
      rows.push_back(bench_full(cfg, threads));
    } else {
      throw ConfigError("bench mode must be factors, gbp or full");
    }
    const auto dir = prepare_output(cfg);
    std::ostringstream csv;
    write_bench_csv(csv, rows);
    write_file(dir / "bench.csv", csv.str());
    out << csv.str();
    out << "lanes " << threads << "; wrote " << (dir / "bench.csv").string() << '\n';
    return 0;
  });
}

int cmd_compare_modes(const std::string& config_path, const CliOverrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto cfg = load_config(config_path);
    apply_overrides(cfg, ov);
    if (cfg.modes.size() < 2) throw ConfigError("compare-modes needs at least two entries in 'modes'");
    const auto sdf = build_environment(cfg);
    const auto dir = prepare_output(cfg);

    std::vector<PlanOutput> plans;
    json report = json::array();
    for (const auto& mode : cfg.modes) {
      plans.push_back(execute_plan(cfg, sdf, mode.waypoints));
      write_file(dir / ("result_" + mode.name + ".json"), result_json(cfg, plans.back()).dump(2) + "\n");
      std::ostringstream costs;
      write_costs_jsonl(costs, plans.back());
      write_file(dir / ("costs_" + mode.name + ".jsonl"), costs.str());
      json row = cost_json(plans.back().run.final_cost);
      row["name"] = mode.name;
      row["min_clearance"] = plans.back().min_clearance;
      report.push_back(std::move(row));
    }
    print_cost_header(out);
    std::size_t best = 0;
    for (std::size_t k = 0; k < plans.size(); ++k) {
      print_cost_row(out, cfg.modes[k].name, plans[k]);
      if (plans[k].run.final_cost.total < plans[best].run.final_cost.total) best = k;
    }
    out << "lower total: " << cfg.modes[best].name << '\n';
    write_file(dir / "modes.json", json{{"schema_version", kResultSchemaVersion},
                                        {"modes", std::move(report)},
                                        {"lower_total", cfg.modes[best].name}}
                                           .dump(2) +
                                       "\n");
    return 0;
  });
}

}  // namespace gvimp
