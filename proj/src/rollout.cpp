#include "cbs/rollout.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cbs {

void validate(const RolloutRecord& r, std::optional<std::int64_t> vocabulary_size) {
  if (r.reward != 0.0 && r.reward != 1.0)
    throw std::invalid_argument("rollout " + std::to_string(r.id) + ": reward must be 0 or 1");
  if (!(r.clip_ratio >= 0.0 && r.clip_ratio <= 1.0))
    throw std::invalid_argument("rollout " + std::to_string(r.id) + ": clip_ratio outside [0,1]");
  if (r.usage_count < 0)
    throw std::invalid_argument("rollout " + std::to_string(r.id) + ": negative usage_count");
  if (r.response_length < 0)
    throw std::invalid_argument("rollout " + std::to_string(r.id) + ": negative response_length");
  if (r.birth_round < 1 || r.last_used_round < r.birth_round)
    throw std::invalid_argument("rollout " + std::to_string(r.id) +
                                ": last_used_round must be >= birth_round >= 1");
  if (!(r.entropy >= 0.0) || !std::isfinite(r.entropy))
    throw std::invalid_argument("rollout " + std::to_string(r.id) + ": entropy must be >= 0");
  if (vocabulary_size && r.entropy > std::log(static_cast<double>(*vocabulary_size)) + 1e-12)
    throw std::invalid_argument("rollout " + std::to_string(r.id) +
                                ": entropy exceeds log(vocabulary_size)");
  if (!std::isfinite(r.advantage))
    throw std::invalid_argument("rollout " + std::to_string(r.id) + ": non-finite advantage");
}

GroupStats compute_group_stats(std::span<const double> rewards, GroupId group_id) {
  if (rewards.empty()) throw std::invalid_argument("compute_group_stats: empty group");
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double v : rewards) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : rewards) ss += (v - mean) * (v - mean);
  return GroupStats{group_id, mean, std::sqrt(ss / n), static_cast<std::int64_t>(rewards.size())};
}

std::vector<double> compute_advantages(std::span<const double> rewards, const GroupStats& stats) {
  if (static_cast<std::int64_t>(rewards.size()) != stats.size)
    throw std::invalid_argument("compute_advantages: group size mismatch");
  std::vector<double> out(rewards.size(), 0.0);
  if (stats.std_reward > 0.0) {
    for (std::size_t i = 0; i < rewards.size(); ++i)
      out[i] = (rewards[i] - stats.mean_reward) / stats.std_reward;
  }
  return out;
}

bool FeatureVector::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

FeatureVector FeatureTransform::apply(FeatureVector h) const {
  for (std::size_t i = 0; i < kFeatureDim; ++i) {
    if (scale) h[i] *= (*scale)[i];
    if (shift) h[i] += (*shift)[i];
  }
  if (l2_normalize) {
    double norm = 0.0;
    for (double v : h.values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : h.values) v /= norm;
  }
  return h;
}

FeatureVector featurize(const RolloutRecord& record, const GroupStats& stats,
                        std::int64_t current_round, std::int64_t max_length) {
  if (current_round < record.birth_round)
    throw std::invalid_argument("featurize: current_round precedes birth_round");
  if (max_length < 1) throw std::invalid_argument("featurize: max_length must be positive");
  if (record.response_length > max_length)
    throw std::invalid_argument("featurize: response_length exceeds max_length");

  FeatureVector h;
  h[Feature::kReward] = record.reward;
  h[Feature::kAdvantage] = record.advantage;
  h[Feature::kGroupMeanReward] = stats.mean_reward;
  h[Feature::kGroupStdReward] = stats.std_reward;
  h[Feature::kNormalizedLength] =
      static_cast<double>(record.response_length) / static_cast<double>(max_length);
  h[Feature::kTruncationFlag] = record.truncated ? 1.0 : 0.0;
  h[Feature::kEntropy] = record.entropy;
  h[Feature::kClipRatio] = record.clip_ratio;
  h[Feature::kUsageCount] = static_cast<double>(record.usage_count);
  h[Feature::kSampleAge] = static_cast<double>(current_round - record.birth_round);
  return h;
}

nlohmann::json to_json(const RolloutRecord& r) {
  return nlohmann::json{{"id", r.id},
                        {"group_id", r.group_id},
                        {"reward", r.reward},
                        {"advantage", r.advantage},
                        {"response_length", r.response_length},
                        {"truncated", r.truncated},
                        {"entropy", r.entropy},
                        {"clip_ratio", r.clip_ratio},
                        {"usage_count", r.usage_count},
                        {"birth_round", r.birth_round},
                        {"last_used_round", r.last_used_round}};
}

RolloutRecord rollout_from_json(const nlohmann::json& j) {
  RolloutRecord r;
  r.id = j.at("id").get<RolloutId>();
  r.group_id = j.at("group_id").get<GroupId>();
  r.reward = j.at("reward").get<double>();
  r.advantage = j.at("advantage").get<double>();
  r.response_length = j.at("response_length").get<std::int64_t>();
  r.truncated = j.at("truncated").get<bool>();
  r.entropy = j.at("entropy").get<double>();
  r.clip_ratio = j.at("clip_ratio").get<double>();
  r.usage_count = j.at("usage_count").get<std::int64_t>();
  r.birth_round = j.at("birth_round").get<std::int64_t>();
  r.last_used_round = j.at("last_used_round").get<std::int64_t>();
  return r;
}

nlohmann::json to_json(const FeatureVector& h) { return nlohmann::json(h.values); }

FeatureVector feature_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kFeatureDim)
    throw std::invalid_argument("feature vector must be an array of 10 reals");
  FeatureVector h;
  for (std::size_t i = 0; i < kFeatureDim; ++i) h[i] = j[i].get<double>();
  return h;
}

std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string rollout_csv_header() {
  return "id,group_id,reward,advantage,response_length,truncated,entropy,clip_ratio,"
         "usage_count,birth_round,last_used_round";
}

std::string to_csv_row(const RolloutRecord& r) {
  std::ostringstream os;
  os << r.id << ',' << r.group_id << ',' << format_real(r.reward) << ','
     << format_real(r.advantage) << ',' << r.response_length << ',' << (r.truncated ? 1 : 0)
     << ',' << format_real(r.entropy) << ',' << format_real(r.clip_ratio) << ','
     << r.usage_count << ',' << r.birth_round << ',' << r.last_used_round;
  return os.str();
}

RolloutRecord rollout_from_csv_row(const std::string& row) {
  std::vector<std::string> cells;
  std::stringstream ss(row);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 11)
    throw std::invalid_argument("rollout csv row: expected 11 fields, got " +
                                std::to_string(cells.size()));
  RolloutRecord r;
  r.id = std::stoll(cells[0]);
  r.group_id = std::stoll(cells[1]);
  r.reward = std::stod(cells[2]);
  r.advantage = std::stod(cells[3]);
  r.response_length = std::stoll(cells[4]);
  r.truncated = cells[5] == "1";
  r.entropy = std::stod(cells[6]);
  r.clip_ratio = std::stod(cells[7]);
  r.usage_count = std::stoll(cells[8]);
  r.birth_round = std::stoll(cells[9]);
  r.last_used_round = std::stoll(cells[10]);
  return r;
}

}  // namespace cbs
