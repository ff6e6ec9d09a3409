// Performance-gain reward for a scheduled batch and its dispatch to samples.
#pragma once

#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cbs {

/// EMA statistics of the reward gain plus the entropy-penalty settings.
/// ema_var is the running variance estimate (the quantity under the square root).
struct RewardTracker {
  double ema_mean = 0.0;
  double ema_var = 1.0;
  double alpha = 0.9;
  double prev_mean_reward = 0.0;
  double prev_mean_entropy = 0.0;
  double entropy_weight = 100.0;
  double entropy_floor = 0.1;
  bool initialized = false;

  void validate() const;
  bool operator==(const RewardTracker&) const = default;
};

inline constexpr double kVarianceFloor = 1e-8;

double sigmoid(double x);

/// w_e * 1[E_t > e_min] * (E_t1 - E_t)
double entropy_penalty(double E_t, double E_t1, const RewardTracker& tracker);

/// V_t1 - V_t - w_e * 1[E_t > e_min] * (E_t1 - E_t)
double raw_gain_reward(double V_t, double V_t1, double E_t, double E_t1,
                       const RewardTracker& tracker);

struct NormalizedReward {
  double reward = 0.0;
  double squashed_gain = 0.0;  // the sigmoid term alone
  RewardTracker tracker;
};

/// Updates mu with the gain, then the variance using the updated mu, then returns
/// sigmoid((g - mu) / sqrt(max(var, floor))) minus the entropy penalty.
NormalizedReward ema_normalized_reward(double V_t, double V_t1, double E_t, double E_t1,
                                       const RewardTracker& tracker);

/// (|A_i| / sum_j |A_j|) * group_reward; uniform split when every advantage is 0.
std::vector<double> dispatch_normalized(double group_reward, std::span<const double> advantages);

/// |A_i| * group_reward
std::vector<double> dispatch_unnormalized(double group_reward, std::span<const double> advantages);

nlohmann::json to_json(const RewardTracker& tracker);

}  // namespace cbs
