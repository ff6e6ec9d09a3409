// Epsilon-greedy top-K arm selection: each slot takes the best-scoring remaining
// arm with probability 1 - eps, otherwise the freshest remaining arm.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cbs/replay_buffer.hpp"
#include "cbs/rng.hpp"
#include "cbs/rollout.hpp"

namespace cbs {

enum class DecayAnchor {
  kTrainingStart,  // eps0 - (t - 1) * decay, literal form
  kWarmupEnd,      // eps0 - (t - T_w - 1) * decay, continuous at the end of warmup
};

struct EpsilonSchedule {
  std::int64_t warmup_rounds = 50;
  double initial_epsilon = 1.0;
  double decay = 0.008;
  double min_epsilon = 0.2;
  DecayAnchor anchor = DecayAnchor::kTrainingStart;

  void validate() const;
};

double epsilon_at(const EpsilonSchedule& schedule, std::int64_t round);

struct SelectionOutcome {
  std::vector<RolloutId> selected_ids;
  std::vector<bool> exploit_flags;  // true: picked by score, false: picked by freshness

  std::size_t size() const { return selected_ids.size(); }
  double exploit_fraction() const;
};

using ScoreMap = std::map<RolloutId, double>;
using AgeMap = std::map<RolloutId, std::int64_t>;

/// Ties: higher score first, then smaller id; fresher (smaller age) first, then smaller id.
/// One independent Bernoulli(eps) coin per slot, drawn in slot order.
SelectionOutcome select_topk(const ScoreMap& scores, const AgeMap& ages, std::size_t k,
                             double epsilon, Rng& rng);

/// Uniform choice over the remaining candidates for every slot (the random ablation).
/// All exploit flags are false.
SelectionOutcome select_uniform(std::span<const RolloutId> candidates, std::size_t k, Rng& rng);

/// max(floor(p% * G), 1)
std::size_t per_group_quota(std::size_t group_size, double p_percent);

/// Strict mode: select_topk within each group (quota per group), concatenated in group order.
SelectionOutcome select_intra_group(const std::map<GroupId, ScoreMap>& group_scores,
                                    const AgeMap& ages, double p_percent, double epsilon,
                                    Rng& rng);

/// Pooled approximation: one select_topk over all groups with k = max(floor(p% * N), 1).
SelectionOutcome select_intra_group_pooled(const std::map<GroupId, ScoreMap>& group_scores,
                                           const AgeMap& ages, double p_percent, double epsilon,
                                           Rng& rng);

/// One select_topk over every buffered arm. Ages come from the views.
SelectionOutcome select_global(std::span<const ArmView> candidates, const ScoreMap& scores,
                               std::size_t k, double epsilon, Rng& rng);

}  // namespace cbs
