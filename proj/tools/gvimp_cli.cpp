#include "gvimp/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Gaussian variational inference motion planner"};
  app.require_subcommand(1);

  gvimp::CliOverrides ov;
  int threads = -1;
  std::uint64_t seed = 0;
  std::string out;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker lanes for factor evaluation (0 = all)");
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--out", out, "Output directory");
  };

  std::string config;
  auto* plan = app.add_subcommand("plan", "Plan one trajectory distribution");
  plan->add_option("config", config, "Experiment config (JSON)")->required();
  add_common(plan);

  std::string mode = "factors";
  auto* bench = app.add_subcommand("bench", "Time serial vs parallel factors, GBP vs dense, or a full run");
  bench->add_option("config", config, "Experiment config (JSON)")->required();
  bench->add_option("--mode", mode, "factors | gbp | full")->check(CLI::IsMember({"factors", "gbp", "full"}));
  add_common(bench);

  auto* compare = app.add_subcommand("compare-modes", "Plan from each configured initialization and compare costs");
  compare->add_option("config", config, "Experiment config (JSON)")->required();
  add_common(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (auto* sub : {plan, bench, compare}) {
    if (sub->count("--threads") > 0) ov.threads = threads;
    if (sub->count("--seed") > 0) ov.seed = seed;
    if (sub->count("--out") > 0) ov.out = out;
  }

  if (*plan) return gvimp::cmd_plan(config, ov, std::cout, std::cerr);
  if (*bench) return gvimp::cmd_bench(config, mode, ov, std::cout, std::cerr);
  return gvimp::cmd_compare_modes(config, ov, std::cout, std::cerr);
}
