#include "cbs/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace cbs::harness {
namespace {

using nlohmann::json;

std::int64_t as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double as_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::array<double, kFeatureDim> as_feature_array(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != kFeatureDim)
    throw ConfigError("config key '" + key + "' must be an array of 10 numbers");
  std::array<double, kFeatureDim> out{};
  for (std::size_t i = 0; i < kFeatureDim; ++i) out[i] = as_real(v[i], key);
  return out;
}

Mode parse_mode(const std::string& s) {
  if (s == "bandit-regret") return Mode::kBanditRegret;
  if (s == "intra-group") return Mode::kIntraGroup;
  if (s == "global") return Mode::kGlobal;
  throw ConfigError("unknown mode '" + s + "' (expected bandit-regret, intra-group or global)");
}

SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "cbs") return SchedulerKind::kCbs;
  if (s == "random") return SchedulerKind::kRandom;
  if (s == "no-ema") return SchedulerKind::kNoEma;
  if (s == "no-entropy") return SchedulerKind::kNoEntropy;
  throw ConfigError("unknown scheduler '" + s + "' (expected cbs, random, no-ema or no-entropy)");
}

Dispatch parse_dispatch(const std::string& s) {
  if (s == "unnormalized") return Dispatch::kUnnormalized;
  if (s == "normalized") return Dispatch::kNormalized;
  throw ConfigError("unknown dispatch '" + s + "' (expected unnormalized or normalized)");
}

DecayAnchor parse_anchor(const std::string& s) {
  if (s == "training-start") return DecayAnchor::kTrainingStart;
  if (s == "warmup-end") return DecayAnchor::kWarmupEnd;
  throw ConfigError("unknown epsilon_anchor '" + s + "' (expected training-start or warmup-end)");
}

struct Key {
  std::function<void(ExperimentConfig&, const json&, const std::string&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

#define CBS_INT_KEY(field) \
  {#field, {[](ExperimentConfig& c, const json& v, const std::string& k) { c.field = static_cast<decltype(c.field)>(as_int(v, k)); }, \
            [](const ExperimentConfig& c) { return json(c.field); }}}
#define CBS_REAL_KEY(field) \
  {#field, {[](ExperimentConfig& c, const json& v, const std::string& k) { c.field = as_real(v, k); }, \
            [](const ExperimentConfig& c) { return json(c.field); }}}
#define CBS_BOOL_KEY(field) \
  {#field, {[](ExperimentConfig& c, const json& v, const std::string& k) { c.field = as_bool(v, k); }, \
            [](const ExperimentConfig& c) { return json(c.field); }}}

const std::map<std::string, Key>& key_table() {
  static const std::map<std::string, Key> table = {
      {"profile", {[](ExperimentConfig& c, const json& v, const std::string& k) { apply_profile(c, as_string(v, k)); },
                   [](const ExperimentConfig& c) { return json(c.profile); }}},
      {"mode", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.mode = parse_mode(as_string(v, k)); },
                [](const ExperimentConfig& c) { return json(to_string(c.mode)); }}},
      {"scheduler", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.scheduler = parse_scheduler(as_string(v, k)); },
                     [](const ExperimentConfig& c) { return json(to_string(c.scheduler)); }}},
      {"seeds", {[](ExperimentConfig& c, const json& v, const std::string& k) {
                   if (!v.is_array() || v.empty()) throw ConfigError("config key 'seeds' must be a non-empty array");
                   c.seeds.clear();
                   for (const auto& s : v) {
                     const auto x = as_int(s, k);
                     if (x < 0) throw ConfigError("config key 'seeds' must hold non-negative integers");
                     c.seeds.push_back(static_cast<std::uint64_t>(x));
                   }
                 },
                 [](const ExperimentConfig& c) { return json(c.seeds); }}},
      {"buffer_records", {[](ExperimentConfig& c, const json& v, const std::string& k) {
                            if (v.is_null()) c.buffer_records.reset();
                            else c.buffer_records = as_int(v, k);
                          },
                          [](const ExperimentConfig& c) { return c.buffer_records ? json(*c.buffer_records) : json(nullptr); }}},
      {"dispatch", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.dispatch = parse_dispatch(as_string(v, k)); },
                    [](const ExperimentConfig& c) { return json(to_string(c.dispatch)); }}},
      {"warmup_rounds", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.epsilon.warmup_rounds = as_int(v, k); },
                         [](const ExperimentConfig& c) { return json(c.epsilon.warmup_rounds); }}},
      {"epsilon_initial", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.epsilon.initial_epsilon = as_real(v, k); },
                           [](const ExperimentConfig& c) { return json(c.epsilon.initial_epsilon); }}},
      {"epsilon_decay", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.epsilon.decay = as_real(v, k); },
                         [](const ExperimentConfig& c) { return json(c.epsilon.decay); }}},
      {"epsilon_min", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.epsilon.min_epsilon = as_real(v, k); },
                       [](const ExperimentConfig& c) { return json(c.epsilon.min_epsilon); }}},
      {"epsilon_anchor", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.epsilon.anchor = parse_anchor(as_string(v, k)); },
                          [](const ExperimentConfig& c) {
                            return json(c.epsilon.anchor == DecayAnchor::kTrainingStart ? "training-start" : "warmup-end");
                          }}},
      {"utility", {[](ExperimentConfig& c, const json& v, const std::string& k) {
                     try {
                       c.utility = sim::parse_utility_family(as_string(v, k));
                     } catch (const std::invalid_argument& e) {
                       throw ConfigError(e.what());
                     }
                   },
                   [](const ExperimentConfig& c) { return json(sim::to_string(c.utility)); }}},
      {"feature_l2_normalize", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.feature_transform.l2_normalize = as_bool(v, k); },
                                [](const ExperimentConfig& c) { return json(c.feature_transform.l2_normalize); }}},
      {"feature_scale", {[](ExperimentConfig& c, const json& v, const std::string& k) {
                           if (v.is_null()) c.feature_transform.scale.reset();
                           else c.feature_transform.scale = as_feature_array(v, k);
                         },
                         [](const ExperimentConfig& c) {
                           return c.feature_transform.scale ? json(*c.feature_transform.scale) : json(nullptr);
                         }}},
      {"feature_shift", {[](ExperimentConfig& c, const json& v, const std::string& k) {
                           if (v.is_null()) c.feature_transform.shift.reset();
                           else c.feature_transform.shift = as_feature_array(v, k);
                         },
                         [](const ExperimentConfig& c) {
                           return c.feature_transform.shift ? json(*c.feature_transform.shift) : json(nullptr);
                         }}},
      {"output_dir", {[](ExperimentConfig& c, const json& v, const std::string& k) { c.output_dir = as_string(v, k); },
                      [](const ExperimentConfig& c) { return json(c.output_dir); }}},
      CBS_INT_KEY(horizon),
      CBS_INT_KEY(net_depth),
      CBS_INT_KEY(net_width),
      CBS_REAL_KEY(scheduler_lr),
      CBS_INT_KEY(buffer_rounds),
      CBS_REAL_KEY(p_percent),
      CBS_BOOL_KEY(intra_group_pooled),
      CBS_REAL_KEY(ema_alpha),
      CBS_REAL_KEY(entropy_weight),
      CBS_REAL_KEY(entropy_floor),
      CBS_INT_KEY(batch_size),
      CBS_INT_KEY(group_size),
      CBS_INT_KEY(problem_count),
      CBS_INT_KEY(feature_dim),
      CBS_INT_KEY(class_count),
      CBS_REAL_KEY(policy_lr),
      CBS_REAL_KEY(clip_low),
      CBS_REAL_KEY(clip_high),
      CBS_REAL_KEY(temperature),
      CBS_REAL_KEY(temperature_drift),
      CBS_INT_KEY(max_length),
      CBS_REAL_KEY(mean_length),
      CBS_INT_KEY(arm_count),
      CBS_REAL_KEY(noise_std),
  };
  return table;
}

#undef CBS_INT_KEY
#undef CBS_REAL_KEY
#undef CBS_BOOL_KEY

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kBanditRegret: return "bandit-regret";
    case Mode::kIntraGroup: return "intra-group";
    case Mode::kGlobal: return "global";
  }
  return "?";
}

std::string to_string(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::kCbs: return "cbs";
    case SchedulerKind::kRandom: return "random";
    case SchedulerKind::kNoEma: return "no-ema";
    case SchedulerKind::kNoEntropy: return "no-entropy";
  }
  return "?";
}

std::string to_string(Dispatch dispatch) {
  return dispatch == Dispatch::kUnnormalized ? "unnormalized" : "normalized";
}

void apply_profile(ExperimentConfig& c, const std::string& name) {
  if (name == "desk") {
    const auto keep_out = c.output_dir;
    c = ExperimentConfig{};
    c.output_dir = keep_out;
    return;
  }
  if (name == "paper-table4") {
    c.profile = name;
    c.scheduler_lr = 1e-4;
    c.epsilon.initial_epsilon = 1.0;
    c.epsilon.warmup_rounds = 50;
    c.epsilon.min_epsilon = 0.2;
    c.epsilon.decay = 0.008;
    c.epsilon.anchor = DecayAnchor::kTrainingStart;
    c.ema_alpha = 0.9;
    c.p_percent = 30.0;
    c.entropy_weight = 100.0;
    c.entropy_floor = 0.1;
    return;
  }
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper-table4)");
}

void ExperimentConfig::validate() const {
  require(horizon >= 1, "horizon must be >= 1");
  require(!seeds.empty(), "seeds must be non-empty");
  require(net_depth >= 2, "net_depth must be >= 2");
  require(net_width >= 1, "net_width must be >= 1");
  require(std::isfinite(scheduler_lr) && scheduler_lr > 0.0, "scheduler_lr must be > 0");
  require(buffer_rounds >= 1, "buffer_rounds must be >= 1");
  if (buffer_records)
    require(*buffer_records >= records_per_round() && *buffer_records % records_per_round() == 0,
            "buffer_records must be a positive multiple of batch_size * group_size");
  require(p_percent > 0.0 && p_percent <= 100.0, "p_percent must lie in (0, 100]");
  try {
    epsilon.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  require(ema_alpha > 0.0 && ema_alpha <= 1.0, "ema_alpha must lie in (0, 1]");
  require(entropy_weight >= 0.0, "entropy_weight must be >= 0");
  require(std::isfinite(entropy_floor), "entropy_floor must be finite");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(group_size >= 2, "group_size must be >= 2");
  require(problem_count >= batch_size, "problem_count must be >= batch_size");
  require(feature_dim >= 1, "feature_dim must be >= 1");
  require(class_count >= 2, "class_count must be >= 2");
  require(policy_lr >= 0.0, "policy_lr must be >= 0");
  require(clip_low >= 0.0 && clip_low < 1.0, "clip_low must lie in [0, 1)");
  require(clip_high >= 0.0, "clip_high must be >= 0");
  require(temperature > 0.0, "temperature must be > 0");
  require(temperature + temperature_drift * static_cast<double>(horizon - 1) > 0.0,
          "temperature must stay positive over the horizon");
  require(max_length >= 1, "max_length must be >= 1");
  require(mean_length >= 1.0, "mean_length must be >= 1");
  require(arm_count >= 1, "arm_count must be >= 1");
  require(noise_std >= 0.0, "noise_std must be >= 0");
}

std::int64_t ExperimentConfig::resolved_buffer_rounds() const {
  return buffer_records ? *buffer_records / records_per_round() : buffer_rounds;
}

double ExperimentConfig::temperature_at(std::int64_t round) const {
  return temperature + temperature_drift * static_cast<double>(round - 1);
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  const auto& table = key_table();
  for (const auto& [key, _] : doc.items())
    if (!table.contains(key)) throw ConfigError("unknown config key '" + key + "'");

  ExperimentConfig c;
  if (doc.contains("profile")) table.at("profile").set(c, doc.at("profile"), "profile");
  for (const auto& [key, value] : doc.items()) {
    if (key == "profile") continue;
    table.at(key).set(c, value, key);
  }
  if (!doc.contains("horizon") && c.mode == Mode::kBanditRegret) c.horizon = 2000;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json out = json::object();
  for (const auto& [key, k] : key_table()) out[key] = k.get(c);
  return out;
}

void set_parameter(ExperimentConfig& c, const std::string& key, const json& value) {
  const auto& table = key_table();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(c, value, key);
}

bool is_known_parameter(const std::string& key) { return key_table().contains(key); }

std::vector<std::string> known_parameters() {
  std::vector<std::string> out;
  for (const auto& [key, _] : key_table()) out.push_back(key);
  return out;
}

}  // namespace cbs::harness
