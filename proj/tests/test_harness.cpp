#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cbs/harness/charts.hpp"
#include "cbs/harness/config.hpp"
#include "cbs/harness/experiment.hpp"

using namespace cbs;
using namespace cbs::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cbs_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_global(SchedulerKind kind = SchedulerKind::kCbs) {
  ExperimentConfig c;
  c.scheduler = kind;
  c.horizon = 20;
  c.net_width = 16;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(json{{"mode", "intra-group"}, {"scheduler", "no-ema"}, {"horizon", 40},
                                   {"seeds", {1, 2}}, {"p_percent", 50.0}});
  CHECK(c.mode == Mode::kIntraGroup);
  CHECK(c.scheduler == SchedulerKind::kNoEma);
  CHECK(c.horizon == 40);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.p_percent == 50.0);

  CHECK(parse_config(json::object()).horizon == 300);
  CHECK(parse_config(json{{"mode", "bandit-regret"}}).horizon == 2000);
  CHECK(parse_config(json{{"mode", "bandit-regret"}, {"horizon", 7}}).horizon == 7);

  CHECK_THROWS_AS(parse_config(json{{"horizn", 3}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"horizon", "ten"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"horizon", 2.5}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"mode", "sideways"}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"seeds", json::array()}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
  try {
    parse_config(json{{"horizn", 3}});
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("horizn") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(parse_config(json{{"horizon", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"p_percent", 0.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"p_percent", 120.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"ema_alpha", 0.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"buffer_rounds", 0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"buffer_records", 100}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"net_depth", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"epsilon_min", 2.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"temperature", 1.0}, {"temperature_drift", -1.0}, {"horizon", 5}}),
                  ConfigError);
  CHECK(parse_config(json{{"buffer_records", 128}}).resolved_buffer_rounds() == 2);
}

TEST_CASE("profiles") {
  const auto p = parse_config(json{{"profile", "paper-table4"}});
  CHECK(p.scheduler_lr == 1e-4);
  CHECK(p.epsilon.warmup_rounds == 50);
  CHECK(p.epsilon.min_epsilon == 0.2);
  CHECK(p.epsilon.decay == 0.008);
  CHECK(p.p_percent == 30.0);
  CHECK(p.entropy_weight == 100.0);
  // explicit keys win over the profile regardless of order
  CHECK(parse_config(json{{"p_percent", 60.0}, {"profile", "paper-table4"}}).p_percent == 60.0);
  CHECK_THROWS_AS(parse_config(json{{"profile", "laptop"}}), ConfigError);
}

TEST_CASE("config json round trip and sweep keys") {
  auto c = small_global();
  c.seeds = {4, 5};
  c.dispatch = Dispatch::kNormalized;
  const auto back = parse_config(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(is_known_parameter("buffer_rounds"));
  CHECK_FALSE(is_known_parameter("bufer_rounds"));
  const auto keys = known_parameters();
  CHECK(std::find(keys.begin(), keys.end(), "entropy_weight") != keys.end());
  set_parameter(c, "buffer_rounds", 3);
  CHECK(c.buffer_rounds == 3);
  CHECK_THROWS_AS(set_parameter(c, "buffer_rounds", "three"), ConfigError);
  CHECK_THROWS_AS(set_parameter(c, "nope", 1), ConfigError);
}

TEST_CASE("final window") {
  CHECK(final_window(1) == 1);
  CHECK(final_window(9) == 1);
  CHECK(final_window(300) == 30);
  CHECK(final_window(2000) == 200);
}

TEST_CASE("scheduler update counts") {
  for (auto mode : {Mode::kGlobal, Mode::kIntraGroup, Mode::kBanditRegret}) {
    auto c = small_global();
    c.mode = mode;
    CHECK(run_single(c, 0).scheduler_updates == c.horizon - 1);
    c.horizon = 1;
    const auto one = run_single(c, 0);
    CHECK(one.scheduler_updates == 0);
    CHECK(std::isnan(one.rounds[0].scheduler_loss));
    c.horizon = 15;
    c.scheduler = SchedulerKind::kRandom;
    const auto rnd = run_single(c, 0);
    CHECK(rnd.scheduler_updates == 0);
    for (const auto& r : rnd.rounds) CHECK(r.exploit_fraction == 0.0);
  }
}

TEST_CASE("round rows") {
  const auto run = run_single(small_global(), 2);
  REQUIRE(run.rounds.size() == 20);
  for (std::size_t i = 0; i < run.rounds.size(); ++i) {
    const auto& r = run.rounds[i];
    CHECK(r.round == static_cast<std::int64_t>(i) + 1);
    CHECK(r.selected_count == 64);  // K = batch_size * group_size in global mode
    CHECK(std::isnan(r.regret_cumulative));
    CHECK(r.V_t >= 0.0);
    CHECK(r.V_t <= 1.0);
    CHECK(r.epsilon == epsilon_at(EpsilonSchedule{}, r.round));
    if (i == 0) {
      CHECK(std::isnan(r.group_reward_raw));
      CHECK(std::isnan(r.scheduler_loss));
      CHECK(r.entropy_indicator == 0);
    } else {
      CHECK(std::isfinite(r.group_reward_raw));
      CHECK(std::isfinite(r.group_reward_ema));
      CHECK(r.entropy_indicator == (run.rounds[i - 1].E_t > 0.1 ? 1 : 0));
    }
  }
  REQUIRE(run.selections.size() == 20);
  for (const auto& s : run.selections) {
    std::vector<RolloutId> ids = s.outcome.selected_ids;
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
  }
}

TEST_CASE("intra-group selection count is the sum of quotas") {
  auto c = small_global();
  c.mode = Mode::kIntraGroup;
  c.buffer_rounds = 3;  // candidates are the current round's groups whatever L is
  const auto run = run_single(c, 1);
  const auto quota = static_cast<std::int64_t>(per_group_quota(8, c.p_percent));
  for (const auto& r : run.rounds) CHECK(r.selected_count == quota * 8);

  c.scheduler = SchedulerKind::kRandom;
  for (const auto& r : run_single(c, 1).rounds) CHECK(r.selected_count == quota * 8);
}

TEST_CASE("no-entropy ablation never raises the indicator") {
  auto c = small_global(SchedulerKind::kNoEntropy);
  c.temperature = 5.0;  // high entropy throughout
  for (const auto& r : run_single(c, 0).rounds) CHECK(r.entropy_indicator == 0);
  c.scheduler = SchedulerKind::kCbs;
  int on = 0;
  for (const auto& r : run_single(c, 0).rounds) on += r.entropy_indicator;
  CHECK(on == 19);
}

TEST_CASE("no-ema rows carry the raw reward") {
  const auto run = run_single(small_global(SchedulerKind::kNoEma), 0);
  for (std::size_t i = 1; i < run.rounds.size(); ++i) CHECK(std::isnan(run.rounds[i].group_reward_ema));
}

TEST_CASE("bandit rows track cumulative regret") {
  auto c = small_global();
  c.mode = Mode::kBanditRegret;
  c.horizon = 50;
  const auto run = run_single(c, 3);
  double prev = 0.0;
  for (const auto& r : run.rounds) {
    CHECK(r.selected_count == 1);
    CHECK(r.regret_cumulative >= prev);
    prev = r.regret_cumulative;
  }
  CHECK(run.cumulative_regret == prev);
}

TEST_CASE("runs are deterministic per seed") {
  const auto c = small_global();
  const auto a = run_single(c, 9), b = run_single(c, 9), other = run_single(c, 10);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(to_csv_row(a.rounds[i]) == to_csv_row(b.rounds[i]));
    CHECK(a.selections[i].outcome.selected_ids == b.selections[i].outcome.selected_ids);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.rounds.size(); ++i) differs = differs || a.rounds[i].V_t != other.rounds[i].V_t;
  CHECK(differs);
}

TEST_CASE("run_experiment writes logs that agree with the summary") {
  auto c = small_global();
  c.seeds = {0, 1};
  const auto dir = scratch("experiment");
  const auto out = run_experiment(c, dir);
  for (auto s : {0, 1}) {
    const auto stem = "seed_" + std::to_string(s);
    CHECK(fs::exists(dir / (stem + "_selections.csv")));
    CHECK(fs::exists(dir / (stem + "_timing.csv")));
    const auto table = read_round_csv(dir / (stem + ".csv"));
    const auto& v = table.columns.at("V_t");
    REQUIRE(v.size() == 20);
    const auto w = static_cast<std::size_t>(final_window(20));
    double tail = 0.0;
    for (std::size_t i = v.size() - w; i < v.size(); ++i) tail += v[i];
    tail /= static_cast<double>(w);
    CHECK(out.summary.at("runs")[static_cast<std::size_t>(s)].at("final_V").get<double>() ==
          doctest::Approx(tail).epsilon(1e-12));
  }
  const auto summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary.at("mean_final_V").get<double>() ==
        doctest::Approx((out.runs[0].final_V + out.runs[1].final_V) / 2).epsilon(1e-12));
  CHECK(summary.at("mean_cumulative_regret").is_null());
  CHECK(slurp(dir / "seed_0.csv").rfind(round_log_header() + "\n", 0) == 0);
}

TEST_CASE("sweep") {
  auto c = small_global();
  c.horizon = 10;
  const auto dir = scratch("sweep");
  const auto rows = run_sweep(c, "buffer_rounds", {json(1), json(3)}, dir);
  REQUIRE(rows.size() == 2);
  CHECK(fs::exists(dir / "sweep.csv"));
  CHECK(fs::exists(dir / "sweep.json"));
  CHECK(fs::exists(dir / "buffer_rounds=3" / "seed_0.csv"));

  auto single = c;
  single.buffer_rounds = 3;
  const auto direct = run_experiment(single, scratch("sweep_direct"));
  CHECK(rows[1].mean_final_V == direct.summary.at("mean_final_V").get<double>());

  std::ifstream csv(dir / "sweep.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "buffer_rounds,mean_final_V,mean_cumulative_regret");

  CHECK_THROWS_AS(run_sweep(c, "buffer_rounds", {}, dir), ConfigError);
  CHECK_THROWS_AS(run_sweep(c, "no_such_key", {json(1)}, dir), ConfigError);
  const auto bad_dir = scratch("sweep_bad");
  CHECK_THROWS_AS(run_sweep(c, "buffer_rounds", {json(1), json(0)}, bad_dir), ConfigError);
  CHECK_FALSE(fs::exists(bad_dir / "buffer_rounds=1"));
}

TEST_CASE("parse_value_list") {
  const auto v = parse_value_list("1,2.5,true,cbs");
  REQUIRE(v.size() == 4);
  CHECK(v[0].is_number_integer());
  CHECK(v[1].get<double>() == 2.5);
  CHECK(v[2].get<bool>());
  CHECK(v[3].get<std::string>() == "cbs");
  CHECK(parse_value_list("").empty());
}

TEST_CASE("round log header") {
  CHECK(round_log_header() ==
        "round,V_t,E_t,group_reward_raw,group_reward_ema,epsilon,selected_count,exploit_fraction,"
        "scheduler_loss,regret_cumulative,mu,sigma,entropy_indicator");
}

TEST_CASE("charts") {
  auto c = small_global();
  c.horizon = 8;
  c.seeds = {0, 1};
  const auto dir = scratch("charts");
  run_experiment(c, dir);
  const auto written = emit_charts({dir / "seed_0.csv", dir / "seed_1.csv"}, dir / "charts");
  REQUIRE(written.size() == 3);
  const auto svg = slurp(dir / "charts" / "reward.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("seed_0") != std::string::npos);
  CHECK(svg.find("seed_1") != std::string::npos);

  CHECK_THROWS_AS(emit_charts({}, dir / "charts"), std::invalid_argument);

  const auto bad = dir / "bad.csv";
  std::ofstream(bad) << "round,V_t\n1,0.5\n";
  try {
    read_round_csv(bad);
    FAIL("expected a schema error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("E_t") != std::string::npos);
  }
  const auto empty = dir / "empty.csv";
  std::ofstream(empty).close();
  CHECK_THROWS_AS(read_round_csv(empty), std::invalid_argument);
}
