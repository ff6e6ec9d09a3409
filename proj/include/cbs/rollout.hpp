// Rollout records, group statistics, advantages and the 10-dimensional
// training-dynamics featurization used as the scheduler's arm context.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbs {

using RolloutId = std::int64_t;
using GroupId = std::int64_t;

struct RolloutRecord {
  RolloutId id = 0;
  GroupId group_id = 0;
  double reward = 0.0;      // binary verifiable reward v_i
  double advantage = 0.0;   // group-relative advantage A_i
  std::int64_t response_length = 0;
  bool truncated = false;
  double entropy = 0.0;     // mean per-token policy entropy (nats), frozen at last use
  double clip_ratio = 0.0;  // fraction of clipped ratio terms, frozen at last use
  std::int64_t usage_count = 0;
  std::int64_t birth_round = 1;
  std::int64_t last_used_round = 1;

  bool operator==(const RolloutRecord&) const = default;
};

/// Throws std::invalid_argument if any record invariant is violated.
/// When `vocabulary_size` is given, entropy must not exceed log(vocabulary_size).
void validate(const RolloutRecord& record,
              std::optional<std::int64_t> vocabulary_size = std::nullopt);

struct GroupStats {
  GroupId group_id = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // population standard deviation
  std::int64_t size = 1;
};

/// Mean and population standard deviation of one group's rewards.
GroupStats compute_group_stats(std::span<const double> rewards, GroupId group_id = 0);

/// A_i = (v_i - mean) / std, or all zeros for a degenerate (std == 0) group.
std::vector<double> compute_advantages(std::span<const double> rewards,
                                       const GroupStats& stats);

inline constexpr std::size_t kFeatureDim = 10;

/// Slot order of the feature vector. Frozen so that logs stay comparable.
enum class Feature : std::size_t {
  kReward = 0,
  kAdvantage,
  kGroupMeanReward,
  kGroupStdReward,
  kNormalizedLength,
  kTruncationFlag,
  kEntropy,
  kClipRatio,
  kUsageCount,
  kSampleAge,
};

struct FeatureVector {
  std::array<double, kFeatureDim> values{};

  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  bool all_finite() const;
  bool operator==(const FeatureVector&) const = default;
};

/// Optional post-processing applied after packing. Both are off by default.
struct FeatureTransform {
  // values[i] = scale[i] * values[i] + shift[i]
  std::optional<std::array<double, kFeatureDim>> scale;
  std::optional<std::array<double, kFeatureDim>> shift;
  bool l2_normalize = false;

  FeatureVector apply(FeatureVector h) const;
  bool is_identity() const { return !scale && !shift && !l2_normalize; }
};

FeatureVector featurize(const RolloutRecord& record, const GroupStats& stats,
                        std::int64_t current_round, std::int64_t max_length);

// Serialization. Field names match the struct members exactly.
nlohmann::json to_json(const RolloutRecord& record);
RolloutRecord rollout_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureVector& h);
FeatureVector feature_from_json(const nlohmann::json& j);

std::string rollout_csv_header();
std::string to_csv_row(const RolloutRecord& record);
RolloutRecord rollout_from_csv_row(const std::string& row);

/// Shortest round-trippable decimal form ("%.17g").
std::string format_real(double x);

}  // namespace cbs
