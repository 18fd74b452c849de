#pragma once

#include "gvimp/dynamics.hpp"
#include "gvimp/optimizer.hpp"
#include "gvimp/sdf.hpp"
#include "gvimp/slr.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gvimp {

inline constexpr int kResultSchemaVersion = 1;

/// Seeded generator shared by every random choice in an experiment.
/// Uniforms take the top 53 bits of std::mt19937_64 scaled by 2⁻⁵³; normals use
/// the cosine branch of Box–Muller on (1 − u₁, u₂). Both are fully specified,
/// so streams reproduce across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();

 private:
  std::mt19937_64 engine_;
};

struct PlanMode {
  std::string name;
  std::vector<Vector> waypoints;
};

enum class InitKind { Interpolation, Prior, Waypoints };

struct BenchSettings {
  int repetitions = 10;
  std::vector<int> sweep;
};

struct ExperimentConfig {
  std::string system = "point2d";
  double q_c = 1.0;
  Vector start;
  Vector goal;
  int num_intervals = 50;
  double total_time = 5.0;
  double boundary_sigma = 1e-3;

  std::optional<std::string> sdf_file;
  std::vector<Primitive> primitives;
  Bounds bounds;
  double cell_size = 0.05;

  CollisionModel collision;
  OptimizerConfig optimizer;
  OuterConfig outer;
  InitKind init = InitKind::Interpolation;
  std::vector<Vector> waypoints;
  std::vector<PlanMode> modes;
  BenchSettings bench;

  std::uint64_t seed = 0;
  /// Std. dev. of seeded noise added to interior initial positions.
  double init_noise = 0.0;
  std::string output = "out";

  bool is_linear() const { return system == "point2d" || system == "point3d"; }
  int position_dim() const { return system == "point3d" ? 3 : 2; }
  int state_dim() const;
  double dt() const { return total_time / num_intervals; }
};

/// Parses and validates a config. Relative file paths resolve against base_dir.
/// Throws ConfigError with the offending field or path.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::string& path);

SignedDistanceField build_environment(const ExperimentConfig& cfg);

/// Prior of a linear (point robot) system.
DiscretePrior build_linear_prior(const ExperimentConfig& cfg);

/// Initial joint mean for a linear system, including seeded noise.
Vector initial_mean(const ExperimentConfig& cfg, const DiscretePrior& prior, const std::vector<Vector>& waypoints);

struct PlanOutput {
  RunResult run;
  std::optional<OuterResult> outer;
  double min_clearance = 0.0;
  long out_of_bounds = 0;
};

/// Runs P-GVIMP (linear systems) or i-P-GVIMP (nonlinear) for one initialization.
PlanOutput execute_plan(const ExperimentConfig& cfg, const SignedDistanceField& sdf,
                        const std::vector<Vector>& waypoints);

nlohmann::json result_json(const ExperimentConfig& cfg, const PlanOutput& plan);
void write_costs_jsonl(std::ostream& out, const PlanOutput& plan);

/// Lower triangle, row by row: (0,0), (1,0), (1,1), (2,0), ...
std::vector<double> pack_lower(const Matrix& m);
Matrix unpack_lower(const std::vector<double>& packed);

struct BenchRow {
  std::string mode;
  int N = 0;
  int n = 0;
  int k_q = 0;
  double serial_ms = 0.0;
  double parallel_ms = 0.0;

  double improvement_pct() const { return 100.0 * (serial_ms - parallel_ms) / serial_ms; }
};

/// Median times of serial vs `threads`-lane evaluate_all_factors on the
/// config's system at N intervals. `identical` reports bitwise agreement.
BenchRow bench_factors(const ExperimentConfig& cfg, int N, int threads, bool* identical = nullptr);

/// Dense LLT inversion (serial_ms) vs two-sweep GBP marginals (parallel_ms)
/// on the prior precision at N intervals.
BenchRow bench_gbp(const ExperimentConfig& cfg, int N, double* max_rel_err = nullptr);

/// Full optimization wall time with one lane vs `threads` lanes.
BenchRow bench_full(const ExperimentConfig& cfg, int threads);

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

struct CliOverrides {
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

/// Exit codes: 0 success, 1 config error, 2 numerical failure.
int cmd_plan(const std::string& config_path, const CliOverrides& ov, std::ostream& out, std::ostream& err);
int cmd_bench(const std::string& config_path, const std::string& mode, const CliOverrides& ov, std::ostream& out,
              std::ostream& err);
int cmd_compare_modes(const std::string& config_path, const CliOverrides& ov, std::ostream& out, std::ostream& err);

}  // namespace gvimp
