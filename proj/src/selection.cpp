#include "cbs/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cbs {

void EpsilonSchedule::validate() const {
  if (warmup_rounds < 0) throw std::invalid_argument("EpsilonSchedule: negative warmup_rounds");
  if (!(initial_epsilon >= 0.0 && initial_epsilon <= 1.0))
    throw std::invalid_argument("EpsilonSchedule: initial_epsilon outside [0,1]");
  if (!(min_epsilon >= 0.0 && min_epsilon <= 1.0))
    throw std::invalid_argument("EpsilonSchedule: min_epsilon outside [0,1]");
  if (min_epsilon > initial_epsilon)
    throw std::invalid_argument("EpsilonSchedule: min_epsilon exceeds initial_epsilon");
  if (!(decay >= 0.0)) throw std::invalid_argument("EpsilonSchedule: negative decay");
}

double epsilon_at(const EpsilonSchedule& s, std::int64_t round) {
  if (round < 1) throw std::invalid_argument("epsilon_at: round must be >= 1");
  if (round <= s.warmup_rounds) return 1.0;
  const auto steps = s.anchor == DecayAnchor::kTrainingStart ? round - 1 : round - s.warmup_rounds - 1;
  return std::max(s.initial_epsilon - static_cast<double>(steps) * s.decay, s.min_epsilon);
}

double SelectionOutcome::exploit_fraction() const {
  if (exploit_flags.empty()) return 0.0;
  const auto n = std::count(exploit_flags.begin(), exploit_flags.end(), true);
  return static_cast<double>(n) / static_cast<double>(exploit_flags.size());
}

SelectionOutcome select_topk(const ScoreMap& scores, const AgeMap& ages, std::size_t k,
                             double epsilon, Rng& rng) {
  if (scores.size() != ages.size())
    throw std::invalid_argument("select_topk: scores and ages cover different candidates");
  if (k == 0) throw std::invalid_argument("select_topk: k must be positive");
  if (k > scores.size())
    throw std::invalid_argument("select_topk: k = " + std::to_string(k) + " exceeds " +
                                std::to_string(scores.size()) + " candidates");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("select_topk: epsilon outside [0,1]");

  struct Candidate {
    RolloutId id;
    double score;
    std::int64_t age;
  };
  std::vector<Candidate> cands;
  cands.reserve(scores.size());
  auto it_a = ages.begin();
  for (auto it_s = scores.begin(); it_s != scores.end(); ++it_s, ++it_a) {
    if (it_s->first != it_a->first)
      throw std::invalid_argument("select_topk: scores and ages cover different candidates");
    cands.push_back({it_s->first, it_s->second, it_a->second});
  }

  // Candidates are already id-ascending, so stable sorts give the id tie-break.
  std::vector<std::size_t> by_score(cands.size());
  std::iota(by_score.begin(), by_score.end(), 0);
  std::vector<std::size_t> by_age = by_score;
  std::stable_sort(by_score.begin(), by_score.end(),
                   [&](std::size_t a, std::size_t b) { return cands[a].score > cands[b].score; });
  std::stable_sort(by_age.begin(), by_age.end(),
                   [&](std::size_t a, std::size_t b) { return cands[a].age < cands[b].age; });

  std::vector<bool> taken(cands.size(), false);
  std::size_t score_pos = 0;
  std::size_t age_pos = 0;
  SelectionOutcome out;
  out.selected_ids.reserve(k);
  out.exploit_flags.reserve(k);
  for (std::size_t slot = 0; slot < k; ++slot) {
    const bool explore = uniform01(rng) < epsilon;
    std::size_t pick;
    if (explore) {
      while (taken[by_age[age_pos]]) ++age_pos;
      pick = by_age[age_pos];
    } else {
      while (taken[by_score[score_pos]]) ++score_pos;
      pick = by_score[score_pos];
    }
    taken[pick] = true;
    out.selected_ids.push_back(cands[pick].id);
    out.exploit_flags.push_back(!explore);
  }
  return out;
}

SelectionOutcome select_uniform(std::span<const RolloutId> candidates, std::size_t k, Rng& rng) {
  if (k == 0) throw std::invalid_argument("select_uniform: k must be positive");
  if (k > candidates.size())
    throw std::invalid_argument("select_uniform: k exceeds candidate count");
  std::vector<RolloutId> pool(candidates.begin(), candidates.end());
  SelectionOutcome out;
  for (std::size_t slot = 0; slot < k; ++slot) {
    const std::size_t remaining = pool.size() - slot;
    auto j = slot + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(remaining));
    j = std::min(j, pool.size() - 1);
    std::swap(pool[slot], pool[j]);
    out.selected_ids.push_back(pool[slot]);
    out.exploit_flags.push_back(false);
  }
  return out;
}

std::size_t per_group_quota(std::size_t group_size, double p_percent) {
  if (!(p_percent > 0.0 && p_percent <= 100.0))
    throw std::invalid_argument("per_group_quota: p_percent must lie in (0, 100]");
  const auto q = static_cast<std::size_t>(std::floor(p_percent * static_cast<double>(group_size) / 100.0));
  return std::max<std::size_t>(q, 1);
}

namespace {

AgeMap ages_for(const ScoreMap& scores, const AgeMap& ages) {
  AgeMap out;
  for (const auto& [id, _] : scores) {
    const auto it = ages.find(id);
    if (it == ages.end())
      throw std::invalid_argument("selection: no age for rollout " + std::to_string(id));
    out.emplace(id, it->second);
  }
  return out;
}

}  // namespace

SelectionOutcome select_intra_group(const std::map<GroupId, ScoreMap>& group_scores,
                                    const AgeMap& ages, double p_percent, double epsilon,
                                    Rng& rng) {
  SelectionOutcome out;
  for (const auto& [gid, scores] : group_scores) {
    if (scores.empty())
      throw std::invalid_argument("select_intra_group: group " + std::to_string(gid) + " is empty");
    const auto part = select_topk(scores, ages_for(scores, ages),
                                  per_group_quota(scores.size(), p_percent), epsilon, rng);
    out.selected_ids.insert(out.selected_ids.end(), part.selected_ids.begin(), part.selected_ids.end());
    out.exploit_flags.insert(out.exploit_flags.end(), part.exploit_flags.begin(), part.exploit_flags.end());
  }
  return out;
}

SelectionOutcome select_intra_group_pooled(const std::map<GroupId, ScoreMap>& group_scores,
                                           const AgeMap& ages, double p_percent, double epsilon,
                                           Rng& rng) {
  ScoreMap pooled;
  for (const auto& [gid, scores] : group_scores) {
    if (scores.empty())
      throw std::invalid_argument("select_intra_group_pooled: group " + std::to_string(gid) + " is empty");
    pooled.insert(scores.begin(), scores.end());
  }
  return select_topk(pooled, ages_for(pooled, ages), per_group_quota(pooled.size(), p_percent),
                     epsilon, rng);
}

SelectionOutcome select_global(std::span<const ArmView> candidates, const ScoreMap& scores,
                               std::size_t k, double epsilon, Rng& rng) {
  if (candidates.size() < k)
    throw std::invalid_argument("select_global: buffer holds " + std::to_string(candidates.size()) +
                                " arms, fewer than k = " + std::to_string(k));
  AgeMap ages;
  ScoreMap s;
  for (const auto& arm : candidates) {
    const auto it = scores.find(arm.id);
    if (it == scores.end())
      throw std::invalid_argument("select_global: no score for rollout " + std::to_string(arm.id));
    ages.emplace(arm.id, arm.sample_age);
    s.emplace(arm.id, it->second);
  }
  return select_topk(s, ages, k, epsilon, rng);
}

}  // namespace cbs
