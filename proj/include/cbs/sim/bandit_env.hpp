// Contextual-bandit environment with a hidden arm-utility function, used to
// measure the scheduler's cumulative regret in the single-arm setting.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbs/rollout.hpp"

namespace cbs::sim {

enum class UtilityFamily {
  kLinear,  // (1 + <w, h>) / 2
  kCosine,  // (1 + cos(pi <w, h>)) / 2
};

UtilityFamily parse_utility_family(const std::string& name);
std::string to_string(UtilityFamily family);

struct BanditConfig {
  std::int64_t arm_count = 32;
  std::int64_t horizon = 2000;
  UtilityFamily family = UtilityFamily::kLinear;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
};

struct BanditRound {
  std::vector<FeatureVector> contexts;  // unit l2 norm
  std::vector<double> utilities;        // hidden, in [0, 1]

  std::size_t best_arm() const;
};

class BanditEnv {
 public:
  explicit BanditEnv(BanditConfig config);

  /// Contexts and utilities for `round` in [1, horizon]; a pure function of (seed, round).
  BanditRound round(std::int64_t round) const;

  /// Noisy observed reward of `arm` at `round`: clamp(utility + N(0, noise_std), 0, 1).
  double observe(const BanditRound& r, std::size_t arm, std::int64_t round) const;

  double utility(const FeatureVector& h) const;
  const FeatureVector& weights() const { return weights_; }
  const BanditConfig& config() const { return config_; }

 private:
  BanditConfig config_;
  FeatureVector weights_;  // unit norm
};

/// sum_t (optimal_t - selected_t)
double regret(std::span<const double> selected_utilities, std::span<const double> optimal_utilities);

}  // namespace cbs::sim
