// cbs run | sweep | charts
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cbs/harness/charts.hpp"
#include "cbs/harness/config.hpp"
#include "cbs/harness/experiment.hpp"

namespace {

using namespace cbs::harness;

int run_command(const std::string& config_path, const std::vector<long long>& seed,
                const std::string& out) {
  auto config = load_config(config_path);
  if (!seed.empty()) {
    if (seed.front() < 0) throw ConfigError("--seed must be non-negative");
    config.seeds = {static_cast<std::uint64_t>(seed.front())};
  }
  if (!out.empty()) config.output_dir = out;
  const auto result = run_experiment(config, config.output_dir);
  std::cout << "wrote " << result.runs.size() << " run(s) to " << config.output_dir << '\n'
            << "mean final V: " << result.summary.at("mean_final_V").get<double>() << '\n';
  if (!result.summary.at("mean_cumulative_regret").is_null())
    std::cout << "mean cumulative regret: " << result.summary.at("mean_cumulative_regret").get<double>() << '\n';
  return 0;
}

int sweep_command(const std::string& config_path, const std::string& param, const std::string& values,
                  const std::string& out) {
  auto config = load_config(config_path);
  if (!out.empty()) config.output_dir = out;
  const auto rows = run_sweep(config, param, parse_value_list(values), config.output_dir);
  write_sweep_table(std::cout, param, rows);
  return 0;
}

int charts_command(const std::string& out, const std::vector<std::string>& csvs) {
  std::vector<std::filesystem::path> paths(csvs.begin(), csvs.end());
  for (const auto& p : emit_charts(paths, out)) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual-bandit rollout scheduler: experiments, sweeps and charts"};
  app.require_subcommand(1);

  std::string config_path, out, param, values;
  std::vector<long long> seed;
  std::vector<std::string> csvs;

  auto* run = app.add_subcommand("run", "Run one experiment (every configured seed)");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run only this seed")->expected(1);
  run->add_option("--out", out, "Output directory (overrides output_dir)");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of a config key");
  sweep->add_option("--config", config_path, "Base experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--param", param, "Config key to vary")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", out, "Output directory (overrides output_dir)");

  auto* charts = app.add_subcommand("charts", "Render SVG charts from per-round CSV logs");
  charts->add_option("--out", out, "Output directory")->required();
  charts->add_option("csv", csvs, "Per-round CSV logs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run) return run_command(config_path, seed, out);
    if (*sweep) return sweep_command(config_path, param, values, out);
    if (*charts) return charts_command(out, csvs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
