// Toy group-relative RL loop: a softmax classifier policy answers problems from
// a bank, each answer earns a binary verifiable reward, and the policy is
// trained with a clipped importance-ratio surrogate.
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cbs/rollout.hpp"

namespace cbs::sim {

struct ProblemBank {
  Eigen::MatrixXd features;  // one problem per row, unit l2 norm
  std::vector<int> answers;  // correct class per problem
  int class_count = 4;
  std::int64_t batch_size = 8;
  std::int64_t group_size = 8;

  /// Problems with Gaussian features; the answer is the argmax of a hidden linear teacher.
  static ProblemBank generate(std::int64_t problem_count, std::int64_t feature_dim,
                              int class_count, std::int64_t batch_size, std::int64_t group_size,
                              std::uint64_t seed);

  std::int64_t size() const { return static_cast<std::int64_t>(answers.size()); }
  Eigen::Index feature_dim() const { return features.cols(); }
  void validate() const;
};

struct ToyPolicy {
  Eigen::MatrixXd parameters;  // feature_dim x class_count
  double temperature = 1.0;
  std::uint64_t rng_seed = 0;

  static ToyPolicy zeros(Eigen::Index feature_dim, int class_count, double temperature,
                         std::uint64_t seed);

  /// softmax(parameters^T x / temperature)
  Eigen::VectorXd probabilities(const Eigen::VectorXd& x) const;
};

/// Shannon entropy in nats.
double entropy(const Eigen::VectorXd& probabilities);

/// Mean entropy of the policy's class distribution over every problem in the bank.
double mean_policy_entropy(const ToyPolicy& policy, const ProblemBank& bank);
/// Expected fraction of correct answers over the whole bank.
double expected_accuracy(const ToyPolicy& policy, const ProblemBank& bank);

struct LengthModel {
  std::int64_t max_length = 4096;
  double mean_length = 1024.0;  // geometric, truncated at max_length
};

struct ToyRollout {
  RolloutRecord record;
  std::int64_t problem = 0;
  int action = 0;
  double behavior_prob = 1.0;  // probability of `action` under the generating policy
};

struct RolloutGroup {
  GroupId group_id = 0;
  std::int64_t problem = 0;
  std::vector<ToyRollout> rollouts;

  std::vector<double> rewards() const;
};

/// Samples batch_size distinct problems and group_size answers for each. Every
/// record is fully populated (advantages from its group, entropy of the policy on
/// its problem, clip ratio 0). Ids are assigned from `next_id` upward and group ids
/// are (round - 1) * batch_size + index. Deterministic per (seed, round).
std::vector<RolloutGroup> generate_group_rollouts(const ToyPolicy& policy, const ProblemBank& bank,
                                                  std::int64_t round, RolloutId& next_id,
                                                  const LengthModel& lengths, std::uint64_t seed);

struct ClipBounds {
  double low = 0.2;
  double high = 0.2;
};

/// (1/K) sum_i min(A_i r_i, A_i clip(r_i, 1 - low, 1 + high)), r_i = pi(a_i | x_i) / behavior_prob_i.
double clipped_surrogate(const ToyPolicy& policy, std::span<const ToyRollout> selected,
                         const ProblemBank& bank, const ClipBounds& clip);

/// Gradient of clipped_surrogate() with respect to policy.parameters.
Eigen::MatrixXd clipped_surrogate_gradient(const ToyPolicy& policy,
                                           std::span<const ToyRollout> selected,
                                           const ProblemBank& bank, const ClipBounds& clip);

struct PolicyUpdate {
  ToyPolicy policy;
  std::vector<double> clip_fraction;  // per selected record, in {0, 1}
  std::vector<double> entropy;        // per selected record, under the pre-update policy
};

/// One gradient-ascent step on the clipped surrogate.
PolicyUpdate toy_policy_update(const ToyPolicy& policy, std::span<const ToyRollout> selected,
                               const ProblemBank& bank, const ClipBounds& clip,
                               double learning_rate);

/// (V, E): mean reward and mean entropy of a freshly generated batch.
std::pair<double, double> measure_round(std::span<const RolloutRecord> records);

/// Keeps only groups with a mix of correct and incorrect answers.
std::vector<RolloutGroup> dynamic_sampling_filter(std::vector<RolloutGroup> groups);

}  // namespace cbs::sim
