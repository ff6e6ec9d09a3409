#include "cbs/sim/bandit_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "cbs/rng.hpp"

namespace cbs::sim {
namespace {

FeatureVector unit_gaussian(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  FeatureVector h;
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : h.values) {
      v = normal(rng);
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : h.values) v /= norm;
  return h;
}

double dot(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureDim; ++i) s += a[i] * b[i];
  return s;
}

constexpr std::uint64_t kWeightStream = 0x77;
constexpr std::uint64_t kContextStream = 0xc0;
constexpr std::uint64_t kNoiseStream = 0x4e;

}  // namespace

UtilityFamily parse_utility_family(const std::string& name) {
  if (name == "linear") return UtilityFamily::kLinear;
  if (name == "cosine") return UtilityFamily::kCosine;
  throw std::invalid_argument("unknown utility family '" + name + "' (expected linear or cosine)");
}

std::string to_string(UtilityFamily family) {
  return family == UtilityFamily::kLinear ? "linear" : "cosine";
}

std::size_t BanditRound::best_arm() const {
  return static_cast<std::size_t>(
      std::distance(utilities.begin(), std::max_element(utilities.begin(), utilities.end())));
}

BanditEnv::BanditEnv(BanditConfig config) : config_(config) {
  if (config_.arm_count < 1) throw std::invalid_argument("BanditEnv: arm_count must be >= 1");
  if (config_.horizon < 1) throw std::invalid_argument("BanditEnv: horizon must be >= 1");
  if (!(config_.noise_std >= 0.0)) throw std::invalid_argument("BanditEnv: negative noise_std");
  Rng rng(derive_seed(config_.seed, {kWeightStream}));
  weights_ = unit_gaussian(rng);
}

double BanditEnv::utility(const FeatureVector& h) const {
  const double x = dot(weights_, h);
  const double u = config_.family == UtilityFamily::kLinear
                       ? 0.5 * (1.0 + x)
                       : 0.5 * (1.0 + std::cos(std::numbers::pi * x));
  return std::clamp(u, 0.0, 1.0);
}

BanditRound BanditEnv::round(std::int64_t t) const {
  if (t < 1 || t > config_.horizon)
    throw std::out_of_range("BanditEnv: round " + std::to_string(t) + " outside [1, " +
                            std::to_string(config_.horizon) + "]");
  Rng rng(derive_seed(config_.seed, {kContextStream, static_cast<std::uint64_t>(t)}));
  BanditRound out;
  out.contexts.reserve(static_cast<std::size_t>(config_.arm_count));
  for (std::int64_t a = 0; a < config_.arm_count; ++a) {
    out.contexts.push_back(unit_gaussian(rng));
    out.utilities.push_back(utility(out.contexts.back()));
  }
  return out;
}

double BanditEnv::observe(const BanditRound& r, std::size_t arm, std::int64_t t) const {
  const double u = r.utilities.at(arm);
  if (config_.noise_std == 0.0) return u;
  Rng rng(derive_seed(config_.seed, {kNoiseStream, static_cast<std::uint64_t>(t), arm}));
  std::normal_distribution<double> noise(0.0, config_.noise_std);
  return std::clamp(u + noise(rng), 0.0, 1.0);
}

double regret(std::span<const double> selected, std::span<const double> optimal) {
  if (selected.size() != optimal.size())
    throw std::invalid_argument("regret: selected and optimal utilities differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < selected.size(); ++i) total += optimal[i] - selected[i];
  return total;
}

}  // namespace cbs::sim
