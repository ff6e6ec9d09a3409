// FIFO store of the rollouts generated in the most recent L rounds.
#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "cbs/rollout.hpp"

namespace cbs {

/// One arm as seen by the scheduler at a given round.
struct ArmView {
  RolloutId id = 0;
  std::int64_t round = 0;  // round the rollout was generated in
  std::int64_t sample_age = 0;
  FeatureVector features;
};

struct RefreshedMetrics {
  double entropy = 0.0;
  double clip_ratio = 0.0;
};

class ReplayBuffer {
 public:
  struct RoundEntry {
    std::int64_t round_index = 0;
    std::vector<RolloutRecord> records;
    std::map<GroupId, GroupStats> group_stats;
  };

  explicit ReplayBuffer(std::int64_t capacity_rounds);

  /// Capacity given in records; must be a positive multiple of the per-round batch.
  static ReplayBuffer from_record_capacity(std::int64_t capacity_records,
                                           std::int64_t records_per_round);

  /// Appends round `round_index` (must be current_round() + 1) and evicts the oldest
  /// round when more than capacity_rounds() would be retained. Group statistics are
  /// computed from the records' rewards.
  void push_round(std::int64_t round_index, std::vector<RolloutRecord> records);

  /// Increments usage, stamps last_used_round and overwrites entropy/clip ratio with the
  /// values observed in this round's policy update. Ids without an entry in
  /// `refreshed` keep their stored metrics.
  void mark_used(std::span<const RolloutId> ids, std::int64_t round_index,
                 const std::unordered_map<RolloutId, RefreshedMetrics>& refreshed);

  /// Every retained record featurized at `current_round`, ordered by (round asc, id asc).
  std::vector<ArmView> snapshot(std::int64_t current_round, std::int64_t max_length,
                                const FeatureTransform& transform = {}) const;

  const RolloutRecord& record(RolloutId id) const;
  bool contains(RolloutId id) const { return index_.contains(id); }
  const GroupStats& group_stats_of(RolloutId id) const;

  std::int64_t capacity_rounds() const { return capacity_rounds_; }
  std::int64_t current_round() const { return current_round_; }
  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  std::vector<std::int64_t> retained_rounds() const;
  const std::deque<RoundEntry>& rounds() const { return rounds_; }

  /// Rows of rollout_csv_header() prefixed by a "round" column.
  void dump_csv(std::ostream& os) const;

 private:
  RolloutRecord& mutable_record(RolloutId id);
  const RoundEntry& entry_of(std::int64_t round) const;

  std::int64_t capacity_rounds_;
  std::int64_t current_round_ = 0;
  std::deque<RoundEntry> rounds_;
  std::unordered_map<RolloutId, std::pair<std::int64_t, std::size_t>> index_;  // id -> (round, pos)
};

}  // namespace cbs
