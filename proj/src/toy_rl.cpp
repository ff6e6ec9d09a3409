#include "cbs/sim/toy_rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "cbs/rng.hpp"

namespace cbs::sim {
namespace {

constexpr std::uint64_t kProblemStream = 0x51;
constexpr std::uint64_t kTeacherStream = 0x7e;
constexpr std::uint64_t kBatchStream = 0xba;
constexpr std::uint64_t kGroupStream = 0x96;

struct RatioTerm {
  double ratio;
  bool clipped;
  bool gradient_flows;
};

RatioTerm ratio_term(double advantage, double ratio, const ClipBounds& clip) {
  const bool above = ratio > 1.0 + clip.high;
  const bool below = ratio < 1.0 - clip.low;
  // min(A r, A clip(r)) picks the constant branch exactly in these two cases.
  const bool clipped = (advantage > 0.0 && above) || (advantage < 0.0 && below);
  return {ratio, clipped, !clipped && advantage != 0.0};
}

Eigen::VectorXd row(const ProblemBank& bank, std::int64_t problem) {
  return bank.features.row(static_cast<Eigen::Index>(problem)).transpose();
}

}  // namespace

void ProblemBank::validate() const {
  if (batch_size < 1) throw std::invalid_argument("ProblemBank: batch_size must be >= 1");
  if (group_size < 2) throw std::invalid_argument("ProblemBank: group_size must be >= 2");
  if (class_count < 2) throw std::invalid_argument("ProblemBank: class_count must be >= 2");
  if (size() < batch_size)
    throw std::invalid_argument("ProblemBank: fewer problems than batch_size");
  if (features.rows() != size()) throw std::invalid_argument("ProblemBank: feature/answer mismatch");
}

ProblemBank ProblemBank::generate(std::int64_t problem_count, std::int64_t feature_dim,
                                  int class_count, std::int64_t batch_size,
                                  std::int64_t group_size, std::uint64_t seed) {
  if (problem_count < 1 || feature_dim < 1)
    throw std::invalid_argument("ProblemBank: problem_count and feature_dim must be >= 1");
  ProblemBank bank;
  bank.class_count = class_count;
  bank.batch_size = batch_size;
  bank.group_size = group_size;
  std::normal_distribution<double> normal(0.0, 1.0);

  Rng teacher_rng(derive_seed(seed, {kTeacherStream}));
  Eigen::MatrixXd teacher(feature_dim, std::max(class_count, 1));
  for (Eigen::Index i = 0; i < teacher.size(); ++i) teacher.data()[i] = normal(teacher_rng);

  Rng rng(derive_seed(seed, {kProblemStream}));
  bank.features.resize(problem_count, feature_dim);
  bank.answers.resize(static_cast<std::size_t>(problem_count));
  for (Eigen::Index p = 0; p < problem_count; ++p) {
    for (Eigen::Index j = 0; j < feature_dim; ++j) bank.features(p, j) = normal(rng);
    bank.features.row(p).normalize();
    Eigen::Index best = 0;
    (bank.features.row(p) * teacher).maxCoeff(&best);
    bank.answers[static_cast<std::size_t>(p)] = static_cast<int>(best);
  }
  bank.validate();
  return bank;
}

ToyPolicy ToyPolicy::zeros(Eigen::Index feature_dim, int class_count, double temperature,
                           std::uint64_t seed) {
  if (!(temperature > 0.0)) throw std::invalid_argument("ToyPolicy: temperature must be positive");
  return ToyPolicy{Eigen::MatrixXd::Zero(feature_dim, class_count), temperature, seed};
}

Eigen::VectorXd ToyPolicy::probabilities(const Eigen::VectorXd& x) const {
  Eigen::VectorXd z = parameters.transpose() * x / temperature;
  z.array() -= z.maxCoeff();
  Eigen::VectorXd p = z.array().exp();
  return p / p.sum();
}

double entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return std::max(h, 0.0);
}

double mean_policy_entropy(const ToyPolicy& policy, const ProblemBank& bank) {
  double total = 0.0;
  for (std::int64_t p = 0; p < bank.size(); ++p) total += entropy(policy.probabilities(row(bank, p)));
  return total / static_cast<double>(bank.size());
}

double expected_accuracy(const ToyPolicy& policy, const ProblemBank& bank) {
  double total = 0.0;
  for (std::int64_t p = 0; p < bank.size(); ++p)
    total += policy.probabilities(row(bank, p))[bank.answers[static_cast<std::size_t>(p)]];
  return total / static_cast<double>(bank.size());
}

std::vector<double> RolloutGroup::rewards() const {
  std::vector<double> out;
  out.reserve(rollouts.size());
  for (const auto& r : rollouts) out.push_back(r.record.reward);
  return out;
}

std::vector<RolloutGroup> generate_group_rollouts(const ToyPolicy& policy, const ProblemBank& bank,
                                                  std::int64_t round, RolloutId& next_id,
                                                  const LengthModel& lengths, std::uint64_t seed) {
  bank.validate();
  if (round < 1) throw std::invalid_argument("generate_group_rollouts: round must be >= 1");
  if (lengths.max_length < 1 || !(lengths.mean_length >= 1.0))
    throw std::invalid_argument("generate_group_rollouts: invalid length model");

  // Batch of distinct problems: partial Fisher-Yates on the bank indices.
  Rng batch_rng(derive_seed(seed, {kBatchStream, static_cast<std::uint64_t>(round)}));
  std::vector<std::int64_t> order(static_cast<std::size_t>(bank.size()));
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t i = 0; i < bank.batch_size; ++i) {
    const auto remaining = static_cast<double>(bank.size() - i);
    auto j = i + static_cast<std::int64_t>(uniform01(batch_rng) * remaining);
    j = std::min(j, bank.size() - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  const double stop_prob = 1.0 / lengths.mean_length;
  std::vector<RolloutGroup> groups;
  groups.reserve(static_cast<std::size_t>(bank.batch_size));
  for (std::int64_t b = 0; b < bank.batch_size; ++b) {
    RolloutGroup group;
    group.group_id = (round - 1) * bank.batch_size + b;
    group.problem = order[static_cast<std::size_t>(b)];
    const Eigen::VectorXd probs = policy.probabilities(row(bank, group.problem));
    const double h = entropy(probs);
    const int answer = bank.answers[static_cast<std::size_t>(group.problem)];

    Rng rng(derive_seed(seed, {kGroupStream, static_cast<std::uint64_t>(round),
                               static_cast<std::uint64_t>(group.group_id)}));
    std::geometric_distribution<std::int64_t> length_dist(stop_prob);
    for (std::int64_t g = 0; g < bank.group_size; ++g) {
      // Inverse-CDF class draw.
      const double u = uniform01(rng);
      int action = static_cast<int>(probs.size()) - 1;
      double acc = 0.0;
      for (Eigen::Index c = 0; c < probs.size(); ++c) {
        acc += probs[c];
        if (u < acc) {
          action = static_cast<int>(c);
          break;
        }
      }
      const std::int64_t raw_length = length_dist(rng) + 1;

      ToyRollout r;
      r.problem = group.problem;
      r.action = action;
      r.behavior_prob = probs[action];
      r.record.id = next_id++;
      r.record.group_id = group.group_id;
      r.record.reward = action == answer ? 1.0 : 0.0;
      r.record.truncated = raw_length >= lengths.max_length;
      r.record.response_length = std::min(raw_length, lengths.max_length);
      r.record.entropy = h;
      r.record.clip_ratio = 0.0;
      r.record.usage_count = 0;
      r.record.birth_round = round;
      r.record.last_used_round = round;
      group.rollouts.push_back(r);
    }
    const auto rewards = group.rewards();
    const auto stats = compute_group_stats(rewards, group.group_id);
    const auto adv = compute_advantages(rewards, stats);
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) group.rollouts[i].record.advantage = adv[i];
    groups.push_back(std::move(group));
  }
  return groups;
}

double clipped_surrogate(const ToyPolicy& policy, std::span<const ToyRollout> selected,
                         const ProblemBank& bank, const ClipBounds& clip) {
  if (selected.empty()) throw std::invalid_argument("clipped_surrogate: empty selection");
  double total = 0.0;
  for (const auto& r : selected) {
    const double ratio = policy.probabilities(row(bank, r.problem))[r.action] / r.behavior_prob;
    const double clipped = std::clamp(ratio, 1.0 - clip.low, 1.0 + clip.high);
    const double a = r.record.advantage;
    total += std::min(a * ratio, a * clipped);
  }
  return total / static_cast<double>(selected.size());
}

Eigen::MatrixXd clipped_surrogate_gradient(const ToyPolicy& policy,
                                           std::span<const ToyRollout> selected,
                                           const ProblemBank& bank, const ClipBounds& clip) {
  if (selected.empty()) throw std::invalid_argument("clipped_surrogate_gradient: empty selection");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(policy.parameters.rows(), policy.parameters.cols());
  for (const auto& r : selected) {
    const Eigen::VectorXd x = row(bank, r.problem);
    const Eigen::VectorXd p = policy.probabilities(x);
    const double a = r.record.advantage;
    const auto term = ratio_term(a, p[r.action] / r.behavior_prob, clip);
    if (!term.gradient_flows) continue;
    // d log pi(a|x) / dW = x (e_a - p)^T / T
    Eigen::VectorXd dlogit = -p;
    dlogit[r.action] += 1.0;
    grad += (a * term.ratio / policy.temperature) * x * dlogit.transpose();
  }
  return grad / static_cast<double>(selected.size());
}

PolicyUpdate toy_policy_update(const ToyPolicy& policy, std::span<const ToyRollout> selected,
                               const ProblemBank& bank, const ClipBounds& clip,
                               double learning_rate) {
  if (selected.empty()) throw std::invalid_argument("toy_policy_update: empty selection");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("toy_policy_update: negative learning rate");
  PolicyUpdate out{policy, {}, {}};
  out.clip_fraction.reserve(selected.size());
  out.entropy.reserve(selected.size());
  for (const auto& r : selected) {
    const Eigen::VectorXd p = policy.probabilities(row(bank, r.problem));
    const auto term = ratio_term(r.record.advantage, p[r.action] / r.behavior_prob, clip);
    out.clip_fraction.push_back(term.clipped ? 1.0 : 0.0);
    out.entropy.push_back(entropy(p));
  }
  if (learning_rate > 0.0)
    out.policy.parameters += learning_rate * clipped_surrogate_gradient(policy, selected, bank, clip);
  return out;
}

std::pair<double, double> measure_round(std::span<const RolloutRecord> records) {
  if (records.empty()) throw std::invalid_argument("measure_round: empty batch");
  double v = 0.0;
  double e = 0.0;
  for (const auto& r : records) {
    v += r.reward;
    e += r.entropy;
  }
  const auto n = static_cast<double>(records.size());
  return {v / n, e / n};
}

std::vector<RolloutGroup> dynamic_sampling_filter(std::vector<RolloutGroup> groups) {
  std::erase_if(groups, [](const RolloutGroup& g) {
    const auto correct = std::count_if(g.rollouts.begin(), g.rollouts.end(),
                                       [](const ToyRollout& r) { return r.record.reward == 1.0; });
    return correct == 0 || correct == static_cast<std::ptrdiff_t>(g.rollouts.size());
  });
  return groups;
}

}  // namespace cbs::sim
