#include "cbs/replay_buffer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cbs {

ReplayBuffer::ReplayBuffer(std::int64_t capacity_rounds) : capacity_rounds_(capacity_rounds) {
  if (capacity_rounds < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1 round");
}

ReplayBuffer ReplayBuffer::from_record_capacity(std::int64_t capacity_records,
                                                std::int64_t records_per_round) {
  if (records_per_round < 1 || capacity_records < records_per_round ||
      capacity_records % records_per_round != 0)
    throw std::invalid_argument("ReplayBuffer: capacity of " + std::to_string(capacity_records) +
                                " records is not a positive multiple of " +
                                std::to_string(records_per_round) + " records per round");
  return ReplayBuffer(capacity_records / records_per_round);
}

void ReplayBuffer::push_round(std::int64_t round_index, std::vector<RolloutRecord> records) {
  if (round_index != current_round_ + 1)
    throw std::invalid_argument("ReplayBuffer: expected round " +
                                std::to_string(current_round_ + 1) + ", got " +
                                std::to_string(round_index));
  std::sort(records.begin(), records.end(),
            [](const RolloutRecord& a, const RolloutRecord& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (index_.contains(records[i].id) || (i > 0 && records[i - 1].id == records[i].id))
      throw std::invalid_argument("ReplayBuffer: duplicate rollout id " +
                                  std::to_string(records[i].id));
  }

  RoundEntry entry;
  entry.round_index = round_index;
  std::map<GroupId, std::vector<double>> rewards;
  for (const auto& r : records) rewards[r.group_id].push_back(r.reward);
  for (const auto& [gid, vs] : rewards) entry.group_stats.emplace(gid, compute_group_stats(vs, gid));

  for (std::size_t i = 0; i < records.size(); ++i)
    index_.emplace(records[i].id, std::make_pair(round_index, i));
  entry.records = std::move(records);
  rounds_.push_back(std::move(entry));
  current_round_ = round_index;

  while (static_cast<std::int64_t>(rounds_.size()) > capacity_rounds_) {
    for (const auto& r : rounds_.front().records) index_.erase(r.id);
    rounds_.pop_front();
  }
}

const ReplayBuffer::RoundEntry& ReplayBuffer::entry_of(std::int64_t round) const {
  const auto offset = round - rounds_.front().round_index;
  return rounds_.at(static_cast<std::size_t>(offset));
}

const RolloutRecord& ReplayBuffer::record(RolloutId id) const {
  const auto it = index_.find(id);
  if (it == index_.end())
    throw std::out_of_range("ReplayBuffer: unknown rollout id " + std::to_string(id));
  return entry_of(it->second.first).records[it->second.second];
}

RolloutRecord& ReplayBuffer::mutable_record(RolloutId id) {
  return const_cast<RolloutRecord&>(record(id));
}

const GroupStats& ReplayBuffer::group_stats_of(RolloutId id) const {
  const auto& r = record(id);
  return entry_of(index_.at(id).first).group_stats.at(r.group_id);
}

void ReplayBuffer::mark_used(std::span<const RolloutId> ids, std::int64_t round_index,
                             const std::unordered_map<RolloutId, RefreshedMetrics>& refreshed) {
  // Validate everything first so a bad id leaves the buffer untouched.
  for (RolloutId id : ids)
    if (!contains(id))
      throw std::out_of_range("ReplayBuffer::mark_used: unknown rollout id " + std::to_string(id));
  std::vector<RolloutId> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("ReplayBuffer::mark_used: rollout used twice in one round");
  for (RolloutId id : ids)
    if (round_index < record(id).last_used_round)
      throw std::invalid_argument("ReplayBuffer::mark_used: round precedes last use of " +
                                  std::to_string(id));
  for (RolloutId id : ids) {
    auto& r = mutable_record(id);
    r.usage_count += 1;
    r.last_used_round = round_index;
    if (const auto it = refreshed.find(id); it != refreshed.end()) {
      r.entropy = it->second.entropy;
      r.clip_ratio = it->second.clip_ratio;
    }
  }
}

std::vector<ArmView> ReplayBuffer::snapshot(std::int64_t current_round, std::int64_t max_length,
                                            const FeatureTransform& transform) const {
  std::vector<ArmView> out;
  out.reserve(size());
  for (const auto& entry : rounds_) {
    for (const auto& r : entry.records) {
      auto h = featurize(r, entry.group_stats.at(r.group_id), current_round, max_length);
      if (!transform.is_identity()) h = transform.apply(h);
      out.push_back(ArmView{r.id, entry.round_index, current_round - r.birth_round, h});
    }
  }
  return out;
}

std::vector<std::int64_t> ReplayBuffer::retained_rounds() const {
  std::vector<std::int64_t> out;
  for (const auto& e : rounds_) out.push_back(e.round_index);
  return out;
}

void ReplayBuffer::dump_csv(std::ostream& os) const {
  os << "round," << rollout_csv_header() << '\n';
  for (const auto& entry : rounds_)
    for (const auto& r : entry.records) os << entry.round_index << ',' << to_csv_row(r) << '\n';
}

}  // namespace cbs
