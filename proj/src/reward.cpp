#include "cbs/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cbs {
namespace {

void require_finite(std::initializer_list<double> xs, const char* where) {
  for (double x : xs)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(where) + ": non-finite input");
}

}  // namespace

void RewardTracker::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("RewardTracker: alpha must lie in (0,1]");
  if (!(ema_var >= 0.0)) throw std::invalid_argument("RewardTracker: negative ema_var");
  if (!(entropy_weight >= 0.0)) throw std::invalid_argument("RewardTracker: negative entropy_weight");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double entropy_penalty(double E_t, double E_t1, const RewardTracker& tracker) {
  return E_t > tracker.entropy_floor ? tracker.entropy_weight * (E_t1 - E_t) : 0.0;
}

double raw_gain_reward(double V_t, double V_t1, double E_t, double E_t1,
                       const RewardTracker& tracker) {
  require_finite({V_t, V_t1, E_t, E_t1}, "raw_gain_reward");
  return V_t1 - V_t - entropy_penalty(E_t, E_t1, tracker);
}

NormalizedReward ema_normalized_reward(double V_t, double V_t1, double E_t, double E_t1,
                                       const RewardTracker& tracker) {
  require_finite({V_t, V_t1, E_t, E_t1}, "ema_normalized_reward");
  tracker.validate();
  const double gain = V_t1 - V_t;
  NormalizedReward out;
  out.tracker = tracker;
  auto& next = out.tracker;
  next.ema_mean = (1.0 - tracker.alpha) * tracker.ema_mean + tracker.alpha * gain;
  const double centered = gain - next.ema_mean;
  next.ema_var = (1.0 - tracker.alpha) * tracker.ema_var + tracker.alpha * centered * centered;
  next.prev_mean_reward = V_t1;
  next.prev_mean_entropy = E_t1;
  next.initialized = true;

  out.squashed_gain = sigmoid(centered / std::sqrt(std::max(next.ema_var, kVarianceFloor)));
  out.reward = out.squashed_gain - entropy_penalty(E_t, E_t1, tracker);
  return out;
}

std::vector<double> dispatch_normalized(double group_reward, std::span<const double> advantages) {
  if (advantages.empty()) throw std::invalid_argument("dispatch_normalized: no samples");
  double total = 0.0;
  for (double a : advantages) total += std::abs(a);
  std::vector<double> out(advantages.size());
  if (total == 0.0) {
    const double share = group_reward / static_cast<double>(advantages.size());
    for (auto& v : out) v = share;
    return out;
  }
  for (std::size_t i = 0; i < advantages.size(); ++i)
    out[i] = std::abs(advantages[i]) / total * group_reward;
  return out;
}

std::vector<double> dispatch_unnormalized(double group_reward, std::span<const double> advantages) {
  if (advantages.empty()) throw std::invalid_argument("dispatch_unnormalized: no samples");
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < advantages.size(); ++i) out[i] = std::abs(advantages[i]) * group_reward;
  return out;
}

nlohmann::json to_json(const RewardTracker& t) {
  return {{"mu", t.ema_mean}, {"sigma", t.ema_var}, {"V", t.prev_mean_reward},
          {"E", t.prev_mean_entropy}, {"alpha", t.alpha}, {"entropy_weight", t.entropy_weight},
          {"entropy_floor", t.entropy_floor}, {"initialized", t.initialized}};
}

}  // namespace cbs
