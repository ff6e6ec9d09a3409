#include "cbs/harness/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cbs/replay_buffer.hpp"
#include "cbs/reward.hpp"
#include "cbs/rng.hpp"
#include "cbs/scheduler_net.hpp"
#include "cbs/sim/bandit_env.hpp"
#include "cbs/sim/toy_rl.hpp"

namespace cbs::harness {
namespace {

using nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::uint64_t kNetStream = 0x11;
constexpr std::uint64_t kSelectionStream = 0x22;
constexpr std::uint64_t kBankStream = 0x33;
constexpr std::uint64_t kRolloutStream = 0x44;
constexpr std::uint64_t kBanditStream = 0x55;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// Feedback owed to the previous round's selection.
struct PendingFeedback {
  std::vector<FeatureVector> features;
  std::vector<double> advantages;  // RL modes
  std::vector<double> rewards;     // bandit mode: observed reward per selected arm
  double V = 0.0;
  double E = 0.0;
};

void finish(RunResult& result, const ExperimentConfig& config) {
  const auto n = static_cast<std::int64_t>(result.rounds.size());
  const auto window = std::min<std::int64_t>(final_window(config.horizon), n);
  double sum_v = 0.0, tail_v = 0.0, tail_e = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& r = result.rounds[static_cast<std::size_t>(i)];
    sum_v += r.V_t;
    if (i >= n - window) {
      tail_v += r.V_t;
      tail_e += r.E_t;
    }
  }
  if (n > 0) {
    result.mean_V = sum_v / static_cast<double>(n);
    result.final_V = tail_v / static_cast<double>(window);
    result.final_E = tail_e / static_cast<double>(window);
    result.cumulative_regret = result.rounds.back().regret_cumulative;
  }
}

void emit(RunResult& result, const RunObserver& observer, RoundLog row) {
  if (observer.on_round) observer.on_round(row);
  result.rounds.push_back(std::move(row));
}

void emit(RunResult& result, const RunObserver& observer, SelectionLog sel) {
  if (observer.on_selection) observer.on_selection(sel);
  result.selections.push_back(std::move(sel));
}

RunResult run_bandit(const ExperimentConfig& config, std::uint64_t seed, const RunObserver& observer) {
  sim::BanditEnv env(sim::BanditConfig{config.arm_count, config.horizon, config.utility,
                                       config.noise_std, derive_seed(seed, {kBanditStream})});
  auto net = SchedulerNet::init(config.net_depth, config.net_width, derive_seed(seed, {kNetStream}));
  Rng rng(derive_seed(seed, {kSelectionStream}));
  const bool learns = config.scheduler != SchedulerKind::kRandom;

  RunResult result;
  result.seed = seed;
  std::optional<PendingFeedback> pending;
  double regret = 0.0;
  for (std::int64_t t = 1; t <= config.horizon; ++t) {
    const auto start = std::chrono::steady_clock::now();
    const auto round = env.round(t);
    RoundLog row;
    row.round = t;
    row.group_reward_raw = kNaN;
    row.group_reward_ema = kNaN;
    row.scheduler_loss = kNaN;
    row.mu = kNaN;
    row.sigma = kNaN;

    // The single-arm reward is the sample reward itself.
    if (pending) {
      row.group_reward_raw = pending->rewards.front();
      if (learns) {
        const TrainingBatch batch{pending->features, pending->rewards};
        row.scheduler_loss = loss(net, batch);
        net = sgd_update(net, batch, config.scheduler_lr);
        ++result.scheduler_updates;
      }
    }

    std::vector<FeatureVector> contexts;
    contexts.reserve(round.contexts.size());
    for (const auto& h : round.contexts)
      contexts.push_back(config.feature_transform.is_identity() ? h : config.feature_transform.apply(h));

    const double eps = epsilon_at(config.epsilon, t);
    SelectionOutcome outcome;
    if (learns) {
      const auto scores = predict_batch(net, std::span<const FeatureVector>(contexts));
      ScoreMap score_map;
      AgeMap ages;
      for (std::size_t a = 0; a < contexts.size(); ++a) {
        score_map.emplace(static_cast<RolloutId>(a), scores[a]);
        ages.emplace(static_cast<RolloutId>(a), 0);
      }
      outcome = select_topk(score_map, ages, 1, eps, rng);
    } else {
      std::vector<RolloutId> ids(contexts.size());
      std::iota(ids.begin(), ids.end(), RolloutId{0});
      outcome = select_uniform(ids, 1, rng);
    }
    const auto arm = static_cast<std::size_t>(outcome.selected_ids.front());
    const double observed = env.observe(round, arm, t);
    regret += round.utilities[round.best_arm()] - round.utilities[arm];

    row.V_t = observed;
    row.E_t = 0.0;
    row.epsilon = learns ? eps : kNaN;
    row.selected_count = 1;
    row.exploit_fraction = outcome.exploit_fraction();
    row.regret_cumulative = regret;
    row.entropy_indicator = 0;

    pending = PendingFeedback{{contexts[arm]}, {}, {observed}, observed, 0.0};
    emit(result, observer, SelectionLog{t, to_string(config.mode), row.epsilon, outcome});
    row.wallclock_ms = elapsed_ms(start);
    emit(result, observer, row);
  }
  finish(result, config);
  return result;
}

RunResult run_rl(const ExperimentConfig& config, std::uint64_t seed, const RunObserver& observer) {
  const bool global = config.mode == Mode::kGlobal;
  const bool learns = config.scheduler != SchedulerKind::kRandom;

  const auto bank = sim::ProblemBank::generate(config.problem_count, config.feature_dim,
                                               config.class_count, config.batch_size,
                                               config.group_size, derive_seed(seed, {kBankStream}));
  auto policy = sim::ToyPolicy::zeros(bank.feature_dim(), config.class_count, config.temperature, seed);
  auto net = SchedulerNet::init(config.net_depth, config.net_width, derive_seed(seed, {kNetStream}));
  Rng rng(derive_seed(seed, {kSelectionStream}));
  const std::uint64_t rollout_seed = derive_seed(seed, {kRolloutStream});
  const sim::LengthModel lengths{config.max_length, config.mean_length};
  const sim::ClipBounds clip{config.clip_low, config.clip_high};

  RewardTracker tracker;
  tracker.alpha = config.ema_alpha;
  tracker.entropy_weight = config.scheduler == SchedulerKind::kNoEntropy ? 0.0 : config.entropy_weight;
  tracker.entropy_floor = config.entropy_floor;

  ReplayBuffer buffer(global ? config.resolved_buffer_rounds() : 1);
  std::unordered_map<RolloutId, sim::ToyRollout> live;
  RolloutId next_id = 0;

  RunResult result;
  result.seed = seed;
  std::optional<PendingFeedback> pending;

  for (std::int64_t t = 1; t <= config.horizon; ++t) {
    const auto start = std::chrono::steady_clock::now();
    RoundLog row;
    row.round = t;
    row.group_reward_raw = kNaN;
    row.group_reward_ema = kNaN;
    row.scheduler_loss = kNaN;
    row.regret_cumulative = kNaN;

    // Rollout construction.
    policy.temperature = config.temperature_at(t);
    auto groups = sim::generate_group_rollouts(policy, bank, t, next_id, lengths, rollout_seed);
    std::vector<RolloutRecord> fresh;
    for (const auto& g : groups)
      for (const auto& r : g.rollouts) {
        fresh.push_back(r.record);
        live.emplace(r.record.id, r);
      }
    const auto [V, E] = sim::measure_round(fresh);
    buffer.push_round(t, fresh);
    std::erase_if(live, [&](const auto& kv) { return !buffer.contains(kv.first); });

    // Scheduler training on the previous round's selection.
    if (pending) {
      const double raw = raw_gain_reward(pending->V, V, pending->E, E, tracker);
      const auto ema = ema_normalized_reward(pending->V, V, pending->E, E, tracker);
      row.group_reward_raw = raw;
      row.entropy_indicator = (tracker.entropy_weight > 0.0 && pending->E > tracker.entropy_floor) ? 1 : 0;
      double group_reward = raw;
      if (config.scheduler != SchedulerKind::kNoEma) {
        row.group_reward_ema = ema.reward;
        group_reward = ema.reward;
        tracker = ema.tracker;
      } else {
        tracker.prev_mean_reward = V;
        tracker.prev_mean_entropy = E;
      }
      if (learns) {
        TrainingBatch batch;
        batch.features = pending->features;
        batch.targets = config.dispatch == Dispatch::kUnnormalized
                            ? dispatch_unnormalized(group_reward, pending->advantages)
                            : dispatch_normalized(group_reward, pending->advantages);
        row.scheduler_loss = loss(net, batch);
        net = sgd_update(net, batch, config.scheduler_lr);
        ++result.scheduler_updates;
      }
    }
    row.mu = tracker.ema_mean;
    row.sigma = tracker.ema_var;

    // Data scheduling.
    const double eps = epsilon_at(config.epsilon, t);
    const auto arms = buffer.snapshot(t, config.max_length, config.feature_transform);
    std::unordered_map<RolloutId, const ArmView*> arm_of;
    for (const auto& a : arms) arm_of.emplace(a.id, &a);

    SelectionOutcome outcome;
    if (learns) {
      std::vector<FeatureVector> feats;
      feats.reserve(arms.size());
      for (const auto& a : arms) feats.push_back(a.features);
      const auto scores = predict_batch(net, std::span<const FeatureVector>(feats));
      ScoreMap score_map;
      for (std::size_t i = 0; i < arms.size(); ++i) score_map.emplace(arms[i].id, scores[i]);
      if (global) {
        outcome = select_global(arms, score_map, fresh.size(), eps, rng);
      } else {
        std::map<GroupId, ScoreMap> group_scores;
        AgeMap ages;
        for (const auto& a : arms) {
          group_scores[buffer.record(a.id).group_id].emplace(a.id, score_map.at(a.id));
          ages.emplace(a.id, a.sample_age);
        }
        outcome = config.intra_group_pooled
                      ? select_intra_group_pooled(group_scores, ages, config.p_percent, eps, rng)
                      : select_intra_group(group_scores, ages, config.p_percent, eps, rng);
      }
    } else if (global) {
      std::vector<RolloutId> ids;
      for (const auto& a : arms) ids.push_back(a.id);
      outcome = select_uniform(ids, fresh.size(), rng);
    } else if (config.intra_group_pooled) {
      std::vector<RolloutId> ids;
      for (const auto& a : arms) ids.push_back(a.id);
      outcome = select_uniform(ids, per_group_quota(ids.size(), config.p_percent), rng);
    } else {
      for (const auto& g : groups) {
        std::vector<RolloutId> ids;
        for (const auto& r : g.rollouts) ids.push_back(r.record.id);
        const auto part = select_uniform(ids, per_group_quota(ids.size(), config.p_percent), rng);
        outcome.selected_ids.insert(outcome.selected_ids.end(), part.selected_ids.begin(), part.selected_ids.end());
        outcome.exploit_flags.insert(outcome.exploit_flags.end(), part.exploit_flags.begin(), part.exploit_flags.end());
      }
    }

    // Policy optimization on the selection.
    std::vector<sim::ToyRollout> selected;
    selected.reserve(outcome.size());
    for (RolloutId id : outcome.selected_ids) selected.push_back(live.at(id));
    const auto update = sim::toy_policy_update(policy, selected, bank, clip, config.policy_lr);
    policy = update.policy;

    // Arm representation update.
    std::unordered_map<RolloutId, RefreshedMetrics> refreshed;
    for (std::size_t i = 0; i < selected.size(); ++i)
      refreshed.emplace(outcome.selected_ids[i], RefreshedMetrics{update.entropy[i], update.clip_fraction[i]});
    buffer.mark_used(outcome.selected_ids, t, refreshed);

    PendingFeedback next;
    next.V = V;
    next.E = E;
    for (RolloutId id : outcome.selected_ids) {
      next.features.push_back(arm_of.at(id)->features);
      next.advantages.push_back(live.at(id).record.advantage);
    }
    pending = std::move(next);

    row.V_t = V;
    row.E_t = E;
    row.epsilon = learns ? eps : kNaN;
    row.selected_count = static_cast<std::int64_t>(outcome.size());
    row.exploit_fraction = outcome.exploit_fraction();
    emit(result, observer, SelectionLog{t, to_string(config.mode), row.epsilon, outcome});
    row.wallclock_ms = elapsed_ms(start);
    emit(result, observer, row);
  }
  policy.temperature = config.temperature_at(config.horizon);
  result.final_accuracy = sim::expected_accuracy(policy, bank);
  finish(result, config);
  return result;
}

std::string value_label(const json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace

const std::vector<std::string>& round_log_columns() {
  static const std::vector<std::string> cols = {
      "round", "V_t", "E_t", "group_reward_raw", "group_reward_ema", "epsilon", "selected_count",
      "exploit_fraction", "scheduler_loss", "regret_cumulative", "mu", "sigma", "entropy_indicator"};
  return cols;
}

std::string round_log_header() {
  std::string out;
  for (const auto& c : round_log_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string to_csv_row(const RoundLog& r) {
  std::ostringstream os;
  os << r.round << ',' << format_real(r.V_t) << ',' << format_real(r.E_t) << ','
     << format_real(r.group_reward_raw) << ',' << format_real(r.group_reward_ema) << ','
     << format_real(r.epsilon) << ',' << r.selected_count << ',' << format_real(r.exploit_fraction)
     << ',' << format_real(r.scheduler_loss) << ',' << format_real(r.regret_cumulative) << ','
     << format_real(r.mu) << ',' << format_real(r.sigma) << ',' << r.entropy_indicator;
  return os.str();
}

std::int64_t final_window(std::int64_t horizon) { return std::max<std::int64_t>(1, horizon / 10); }

RunResult run_single(const ExperimentConfig& config, std::uint64_t seed, const RunObserver& observer) {
  config.validate();
  return config.mode == Mode::kBanditRegret ? run_bandit(config, seed, observer)
                                            : run_rl(config, seed, observer);
}

json summarize(const ExperimentConfig& config, const std::vector<RunResult>& runs) {
  json per_seed = json::array();
  double sum_final = 0.0, sum_regret = 0.0, sum_mean = 0.0, sum_e = 0.0;
  for (const auto& r : runs) {
    per_seed.push_back({{"seed", r.seed},
                        {"rounds", r.rounds.size()},
                        {"final_V", r.final_V},
                        {"mean_V", r.mean_V},
                        {"final_E", r.final_E},
                        {"cumulative_regret", std::isnan(r.cumulative_regret) ? json(nullptr) : json(r.cumulative_regret)},
                        {"final_accuracy", r.final_accuracy},
                        {"scheduler_updates", r.scheduler_updates}});
    sum_final += r.final_V;
    sum_mean += r.mean_V;
    sum_e += r.final_E;
    sum_regret += r.cumulative_regret;
  }
  const auto n = static_cast<double>(std::max<std::size_t>(runs.size(), 1));
  const bool bandit = config.mode == Mode::kBanditRegret;
  return {{"mode", to_string(config.mode)},
          {"scheduler", to_string(config.scheduler)},
          {"seeds", config.seeds},
          {"final_window", final_window(config.horizon)},
          {"mean_final_V", sum_final / n},
          {"mean_V", sum_mean / n},
          {"mean_final_E", sum_e / n},
          {"mean_cumulative_regret", bandit ? json(sum_regret / n) : json(nullptr)},
          {"runs", per_seed},
          {"config", to_json(config)}};
}

ExperimentOutput run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  ExperimentOutput out;
  for (const auto seed : config.seeds) {
    const auto stem = "seed_" + std::to_string(seed);
    std::ofstream csv(out_dir / (stem + ".csv"));
    std::ofstream sel(out_dir / (stem + "_selections.csv"));
    std::ofstream timing(out_dir / (stem + "_timing.csv"));
    if (!csv || !sel || !timing) throw std::runtime_error("cannot write logs under " + out_dir.string());
    csv << round_log_header() << '\n';
    sel << "round,mode,epsilon,selected_ids,exploit_flags\n";
    timing << "round,wallclock_ms\n";
    RunObserver observer;
    observer.on_round = [&](const RoundLog& r) {
      csv << to_csv_row(r) << '\n' << std::flush;
      timing << r.round << ',' << format_real(r.wallclock_ms) << '\n' << std::flush;
    };
    observer.on_selection = [&](const SelectionLog& s) {
      sel << s.round << ',' << s.mode << ',' << format_real(s.epsilon) << ',';
      for (std::size_t i = 0; i < s.outcome.size(); ++i) sel << (i ? " " : "") << s.outcome.selected_ids[i];
      sel << ',';
      for (std::size_t i = 0; i < s.outcome.size(); ++i) sel << (i ? " " : "") << (s.outcome.exploit_flags[i] ? 1 : 0);
      sel << '\n' << std::flush;
    };
    out.runs.push_back(run_single(config, seed, observer));
  }
  out.summary = summarize(config, out.runs);
  std::ofstream(out_dir / "summary.json") << out.summary.dump(2) << '\n';
  return out;
}

std::vector<json> parse_value_list(const std::string& text) {
  std::vector<json> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(json::parse(item));
    } catch (const json::parse_error&) {
      out.emplace_back(item);
    }
  }
  return out;
}

void write_sweep_table(std::ostream& os, const std::string& parameter, const std::vector<SweepRow>& rows) {
  os << parameter << ",mean_final_V,mean_cumulative_regret\n";
  for (const auto& r : rows)
    os << value_label(r.value) << ',' << format_real(r.mean_final_V) << ','
       << format_real(r.mean_cumulative_regret) << '\n';
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& parameter,
                                const std::vector<json>& values, const std::filesystem::path& out_dir) {
  if (!is_known_parameter(parameter)) throw ConfigError("unknown sweep parameter '" + parameter + "'");
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  // Validate every point before running any of them.
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    auto c = base;
    set_parameter(c, parameter, v);
    c.validate();
    configs.push_back(std::move(c));
  }
  std::vector<SweepRow> rows;
  json table = json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto out = run_experiment(configs[i], out_dir / (parameter + "=" + value_label(values[i])));
    SweepRow row;
    row.value = values[i];
    row.mean_final_V = out.summary.at("mean_final_V").get<double>();
    row.mean_cumulative_regret = out.summary.at("mean_cumulative_regret").is_null()
                                     ? kNaN
                                     : out.summary.at("mean_cumulative_regret").get<double>();
    row.runs = std::move(out.runs);
    table.push_back({{"value", row.value},
                     {"mean_final_V", row.mean_final_V},
                     {"mean_cumulative_regret", std::isnan(row.mean_cumulative_regret)
                                                    ? json(nullptr)
                                                    : json(row.mean_cumulative_regret)}});
    rows.push_back(std::move(row));
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "sweep.csv");
  write_sweep_table(csv, parameter, rows);
  std::ofstream(out_dir / "sweep.json")
      << json{{"parameter", parameter}, {"rows", table}, {"base_config", to_json(base)}}.dump(2) << '\n';
  return rows;
}

}  // namespace cbs::harness
