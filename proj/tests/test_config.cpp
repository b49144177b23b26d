#include <gtest/gtest.h>

#include <map>

#include "support.hpp"
#include "tiresrag/config.hpp"

using namespace tiresrag;
using tiresrag::testing::temp_dir;

namespace {

Config from_layers(const nlohmann::json& file_layer, const std::vector<std::string>& overrides,
                   const std::map<std::string, std::string>& env = {}) {
  auto cfg = default_config_json();
  if (!file_layer.is_null()) merge_config_json(cfg, file_layer);
  apply_environment(cfg, [&](const char* name) -> const char* {
    auto it = env.find(name);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  for (const auto& o : overrides) apply_override(cfg, o);
  return config_from_json(cfg);
}

std::string error_of(const nlohmann::json& layer, const std::vector<std::string>& overrides = {}) {
  try {
    from_layers(layer, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, ReferenceDefaults) {
  const auto c = config_from_json(default_config_json());
  EXPECT_EQ(c.weights.w_t, 0.6);
  EXPECT_EQ(c.weights.w_s, 0.3);
  EXPECT_EQ(c.weights.w_r, 0.3);
  EXPECT_EQ(c.epsilon, 0.2);
  EXPECT_EQ(c.group_size, 5u);
  EXPECT_EQ(c.mu, 2u);
  EXPECT_EQ(c.beta, 0.0);
  EXPECT_EQ(c.advantage.difficulty.A, 0.4);
  EXPECT_EQ(c.advantage.difficulty.B, 1.5);
  EXPECT_EQ(c.advantage.difficulty.rho0, 0.75);
  EXPECT_EQ(c.advantage.difficulty.k, 10.0);
  EXPECT_EQ(c.advantage.lambda_p, 0.1);
  EXPECT_EQ(c.advantage.filter, FilterMode::Prose);
  EXPECT_EQ(c.advantage.filter_low, 0.1);
  EXPECT_EQ(c.advantage.filter_high, 0.9);
  EXPECT_EQ(c.rollout.top_k, 5u);
  EXPECT_EQ(c.schedule, ScheduleMode::Main);
  EXPECT_EQ(c.optimizer, OptimizerMode::Grpo);
  EXPECT_EQ(c.judge.mode, JudgeMode::Oracle);
}

TEST(Config, RejectsBadValuesNamingTheKey) {
  EXPECT_NE(error_of({{"advantage", {{"lambda_p", -1.0}}}}).find("advantage.lambda_p"), std::string::npos);
  EXPECT_NE(error_of({{"foo", 1}}).find("'foo'"), std::string::npos);
  EXPECT_NE(error_of({}, {"world.bogus=3"}).find("world.bogus"), std::string::npos);
  EXPECT_NE(error_of({}, {"optimizer.beta=0.1"}).find("optimizer.beta"), std::string::npos);
  EXPECT_NE(error_of({}, {"rollout.group_size=1"}).find("rollout.group_size"), std::string::npos);
  EXPECT_NE(error_of({}, {"world.chains=9"}).find("world.entities"), std::string::npos);
  EXPECT_NE(error_of({}, {"filter.mode=sometimes"}).find("filter.mode"), std::string::npos);
  EXPECT_NE(error_of({}, {"optimizer.steps=\"many\""}).find("optimizer.steps"), std::string::npos);
  EXPECT_NE(error_of({}, {"optimizer.steps=-4"}).find("optimizer.steps"), std::string::npos);
  EXPECT_NE(error_of({}, {"train.hops=[5]"}).find("train.hops"), std::string::npos);
  EXPECT_NE(error_of({}, {"judge.mode=external"}).find("judge.endpoint"), std::string::npos);
  EXPECT_NE(error_of({}, {"difficulty.B=0.1"}).find("difficulty.B"), std::string::npos);
  EXPECT_NE(error_of({}, {"no-equals-sign"}).find("key=value"), std::string::npos);
}

TEST(Config, Precedence) {
  const nlohmann::json file = {{"optimizer", {{"lr", 0.5}, {"steps", 10}}}, {"train", {{"seed", 3}}}};
  auto c = from_layers(file, {});
  EXPECT_EQ(c.lr, 0.5);
  EXPECT_EQ(c.seed, 3u);
  c = from_layers(file, {}, {{"TIRES_OVERRIDES", "optimizer.lr=0.25; train.seed=4"}});
  EXPECT_EQ(c.lr, 0.25);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.steps, 10u);
  c = from_layers(file, {"optimizer.lr=0.125"}, {{"TIRES_OVERRIDES", "optimizer.lr=0.25"}});
  EXPECT_EQ(c.lr, 0.125);
  c = from_layers({}, {}, {{"TIRES_JUDGE_ENDPOINT", "tcp://127.0.0.1:9"}});
  EXPECT_EQ(c.judge.mode, JudgeMode::External);
  EXPECT_EQ(c.judge.endpoint, "tcp://127.0.0.1:9");
  c = from_layers({}, {"reward.schedule=alg1", "optimizer.mode=reinforce++", "train.hops=[2,3]"});
  EXPECT_EQ(c.schedule, ScheduleMode::Alg1);
  EXPECT_EQ(c.advantage.normalization, NormalizationMode::Batch);
  EXPECT_EQ(c.hops, (std::vector<std::size_t>{2, 3}));
}

TEST(Config, FileLoading) {
  const auto dir = temp_dir("config_file");
  const auto path = (dir / "c.json").string();
  std::ofstream(path) << R"({"optimizer": {"steps": 7}, "output": {"dir": "x"}})";
  const auto c = load_config(path);
  EXPECT_EQ(c.steps, 7u);
  EXPECT_EQ(c.output_dir, "x");
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
}

TEST(Config, JsonRoundTripAndHash) {
  auto c = from_layers({}, {"optimizer.lr=0.3", "train.hops=[1,4]", "filter.persistence=remove"});
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));

  auto moved = c;
  moved.output_dir = "somewhere/else";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  auto changed = c;
  changed.lr = 0.31;
  EXPECT_NE(config_hash(changed), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, HelpListsEveryKey) {
  const auto help = config_keys_help();
  for (const auto& k : config_keys()) {
    EXPECT_NE(help.find(k.path), std::string::npos) << k.path;
    EXPECT_NO_THROW(set_config_value(*std::make_unique<nlohmann::json>(default_config_json()), k.path, k.default_value));
  }
  EXPECT_NE(help.find("[reference: 0.6]"), std::string::npos);
}
