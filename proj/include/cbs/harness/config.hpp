// Experiment configuration: a single flat JSON document. Unknown keys are errors.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbs/rollout.hpp"
#include "cbs/selection.hpp"
#include "cbs/sim/bandit_env.hpp"

namespace cbs::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kBanditRegret, kIntraGroup, kGlobal };
enum class SchedulerKind { kCbs, kRandom, kNoEma, kNoEntropy };
enum class Dispatch { kUnnormalized, kNormalized };

std::string to_string(Mode mode);
std::string to_string(SchedulerKind kind);
std::string to_string(Dispatch dispatch);

struct ExperimentConfig {
  std::string profile = "desk";
  Mode mode = Mode::kGlobal;
  SchedulerKind scheduler = SchedulerKind::kCbs;
  std::int64_t horizon = 300;
  std::vector<std::uint64_t> seeds = {0};

  // scheduler network
  int net_depth = 3;
  int net_width = 64;
  double scheduler_lr = 1e-2;
  Dispatch dispatch = Dispatch::kUnnormalized;

  // candidate sets
  std::int64_t buffer_rounds = 2;
  std::optional<std::int64_t> buffer_records;  // overrides buffer_rounds when set
  double p_percent = 30.0;
  bool intra_group_pooled = false;

  EpsilonSchedule epsilon;

  // reward engine
  double ema_alpha = 0.9;
  double entropy_weight = 100.0;
  double entropy_floor = 0.1;

  // toy RL environment
  std::int64_t batch_size = 8;
  std::int64_t group_size = 8;
  std::int64_t problem_count = 8;  // == batch_size: every round sees the whole bank
  std::int64_t feature_dim = 8;
  int class_count = 4;
  double policy_lr = 0.5;
  double clip_low = 0.2;
  double clip_high = 0.2;
  double temperature = 1.0;
  double temperature_drift = 0.0;  // temperature at round t: temperature + drift * (t - 1)
  std::int64_t max_length = 4096;
  double mean_length = 1024.0;

  // bandit environment
  std::int64_t arm_count = 32;
  double noise_std = 0.05;
  sim::UtilityFamily utility = sim::UtilityFamily::kLinear;

  FeatureTransform feature_transform;

  std::string output_dir = "out";

  /// Throws ConfigError naming the first out-of-domain field.
  void validate() const;

  /// L in rounds after resolving buffer_records against the per-round batch.
  std::int64_t resolved_buffer_rounds() const;
  std::int64_t records_per_round() const { return batch_size * group_size; }
  double temperature_at(std::int64_t round) const;
};

/// Applies a named profile ("desk" or "paper-table4") onto `config`.
void apply_profile(ExperimentConfig& config, const std::string& name);

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Sets one config key from a JSON value (the sweep entry point). Throws ConfigError
/// for unknown keys or ill-typed values.
void set_parameter(ExperimentConfig& config, const std::string& key, const nlohmann::json& value);
bool is_known_parameter(const std::string& key);
std::vector<std::string> known_parameters();

}  // namespace cbs::harness
