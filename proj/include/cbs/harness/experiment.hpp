// Round loop of scheduled policy training:
//   rollout -> scheduler training -> data scheduling -> representation update.
// The scheduler update in round t consumes the feedback for round t-1's
// selection, which only exists once round t's rollouts have been measured.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbs/harness/config.hpp"
#include "cbs/selection.hpp"

namespace cbs::harness {

/// One row of the per-round CSV. Reward, loss and indicator columns describe the
/// scheduler update performed in this round, i.e. the feedback for the previous
/// round's selection; they are NaN (indicator 0) when no update happened.
struct RoundLog {
  std::int64_t round = 0;
  double V_t = 0.0;
  double E_t = 0.0;
  double group_reward_raw = 0.0;
  double group_reward_ema = 0.0;
  double epsilon = 0.0;
  std::int64_t selected_count = 0;
  double exploit_fraction = 0.0;
  double scheduler_loss = 0.0;
  double regret_cumulative = 0.0;  // NaN outside bandit mode
  double mu = 0.0;
  double sigma = 0.0;
  int entropy_indicator = 0;  // 1 iff the entropy penalty was active in this round's feedback
  double wallclock_ms = 0.0;  // written to the timing sidecar, not the CSV
};

const std::vector<std::string>& round_log_columns();
std::string round_log_header();
std::string to_csv_row(const RoundLog& row);

struct SelectionLog {
  std::int64_t round = 0;
  std::string mode;
  double epsilon = 0.0;
  SelectionOutcome outcome;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<RoundLog> rounds;
  std::vector<SelectionLog> selections;
  std::int64_t scheduler_updates = 0;
  double final_V = 0.0;  // mean V_t over the final window
  double mean_V = 0.0;
  double final_E = 0.0;  // mean E_t over the final window
  double cumulative_regret = 0.0;  // NaN outside bandit mode
  double final_accuracy = 0.0;     // expected bank accuracy of the final policy (RL modes)
};

/// Rows in the "final" window: the last max(1, floor(T / 10)) rounds.
std::int64_t final_window(std::int64_t horizon);

struct RunObserver {
  std::function<void(const RoundLog&)> on_round;
  std::function<void(const SelectionLog&)> on_selection;
};

/// Runs one seed entirely in memory (observer callbacks fire as rounds complete).
RunResult run_single(const ExperimentConfig& config, std::uint64_t seed,
                     const RunObserver& observer = {});

struct ExperimentOutput {
  std::vector<RunResult> runs;
  nlohmann::json summary;
};

/// Runs every seed, writing into out_dir:
///   seed_<s>.csv (RoundLog), seed_<s>_selections.csv, seed_<s>_timing.csv, summary.json.
/// Rows are flushed as they complete, so a failing run leaves its partial log.
ExperimentOutput run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

nlohmann::json summarize(const ExperimentConfig& config, const std::vector<RunResult>& runs);

struct SweepRow {
  nlohmann::json value;
  double mean_final_V = 0.0;
  double mean_cumulative_regret = 0.0;
  std::vector<RunResult> runs;
};

/// One experiment per value (each over every configured seed). Results of each value
/// go to out_dir/<param>=<value>/; the table goes to out_dir/sweep.csv and sweep.json.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& parameter,
                                const std::vector<nlohmann::json>& values,
                                const std::filesystem::path& out_dir);

/// Parses "v1,v2,..." into JSON scalars (integers, reals, booleans, or strings).
std::vector<nlohmann::json> parse_value_list(const std::string& text);

void write_sweep_table(std::ostream& os, const std::string& parameter,
                       const std::vector<SweepRow>& rows);

}  // namespace cbs::harness
