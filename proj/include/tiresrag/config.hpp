#pragma once
#ifndef TIRESRAG_CONFIG_HPP
#define TIRESRAG_CONFIG_HPP

// Run configuration. Keys are dotted paths ("reward.w_s"); values come from
// built-in defaults, then a JSON file, then TIRES_* environment variables,
// then command-line overrides (last wins). Unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiresrag/advantage.hpp"
#include "tiresrag/judge_client.hpp"
#include "tiresrag/policy.hpp"
#include "tiresrag/reward.hpp"
#include "tiresrag/text.hpp"
#include "tiresrag/world.hpp"

namespace tiresrag {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class OptimizerMode { Grpo, ReinforcePP };
enum class FilterPersistence { Skip, Remove };

struct ConfigKey {
  std::string path;
  nlohmann::json default_value;
  std::string doc;
  // Published reference setting for this key, if one exists.
  std::string reference_value;
};

inline const std::vector<ConfigKey>& config_keys() {
  using nlohmann::json;
  static const std::vector<ConfigKey> keys = {
      {"world.seed", 1, "world generator seed", ""},
      {"world.entities", 40, "number of entities", ""},
      {"world.chains", 5, "number of disjoint 4-hop chains", ""},
      {"world.distractors", 2, "distractor sentences per document", ""},
      {"rollout.group_size", 5, "rollouts per question (G)", "5"},
      {"rollout.max_steps", 12, "policy decisions per rollout", ""},
      {"rollout.temperature", 1.0, "sampling temperature", "1"},
      {"rollout.top_k", 5, "documents returned per search", "5"},
      {"rollout.max_retrievals", 8, "searches allowed per rollout", ""},
      {"reward.w_t", 0.6, "thinking reward weight", "0.6"},
      {"reward.w_s", 0.3, "sufficiency reward weight", "0.3"},
      {"reward.w_r", 0.3, "reflection reward weight", "0.3"},
      {"reward.schedule", "main", "annealing schedule: main | alg1", "main"},
      {"difficulty.A", 0.4, "difficulty weight lower bound", "0.4"},
      {"difficulty.B", 1.5, "difficulty weight upper bound", "1.5"},
      {"difficulty.rho0", 0.75, "difficulty weight midpoint", "0.75"},
      {"difficulty.k", 10.0, "difficulty weight steepness", "10.0"},
      {"advantage.lambda_p", 0.1, "consistency penalty coefficient", "0.1"},
      {"advantage.penalty", "verbatim", "penalty form: verbatim (A_T*A_T*A_A) | sta (A_S*A_T*A_A)", ""},
      {"filter.mode", "prose", "group filter: prose | alg1 | off", ""},
      {"filter.low", 0.1, "filter lower threshold on answer reward", "0.1"},
      {"filter.high", 0.9, "filter upper threshold on answer reward", "0.9"},
      {"filter.persistence", "skip", "filtered questions: skip (this step) | remove (from the pool)", ""},
      {"optimizer.mode", "grpo", "advantage baseline: grpo (group) | reinforce++ (batch)", "grpo"},
      {"optimizer.mu", 2, "update passes per batch", "2"},
      {"optimizer.epsilon", 0.2, "clipping range", "0.2"},
      {"optimizer.beta", 0.0, "KL coefficient (only 0 is supported)", "0"},
      {"optimizer.lr", 0.1, "learning rate for the tabular policy", ""},
      {"optimizer.steps", 500, "training steps T", ""},
      {"optimizer.batch_questions", 12, "questions per step", ""},
      {"train.seed", 1, "rollout and sampling seed", ""},
      {"train.hops", json::array({3}), "question hop counts in the training pool", ""},
      {"train.collapse_patience", 50, "abort after this many consecutive fully-filtered steps", ""},
      {"train.eval_samples", 40, "final-policy rollouts per training question", ""},
      {"train.checkpoint_every", 0, "checkpoint interval in steps (0: final only)", ""},
      {"judge.mode", "oracle", "judge: oracle | external", ""},
      {"judge.endpoint", "", "external judge endpoint (tcp://HOST:PORT or exec:COMMAND)", ""},
      {"judge.timeout_s", 30.0, "external judge per-request timeout", ""},
      {"judge.max_in_flight", 4, "external judge concurrent requests", ""},
      {"output.dir", "runs/default", "output directory", ""},
      {"output.trajectory_every", 50, "log every rollout of every N-th step plus the last (0: last step only)", ""},
  };
  return keys;
}

struct Config {
  WorldParams world;
  RolloutParams rollout;
  std::size_t group_size = 5;
  double temperature = 1.0;
  RewardWeights weights;
  ScheduleMode schedule = ScheduleMode::Main;
  AdvantageParams advantage;
  FilterPersistence persistence = FilterPersistence::Skip;
  OptimizerMode optimizer = OptimizerMode::Grpo;
  std::size_t mu = 2;
  double epsilon = 0.2;
  double beta = 0.0;
  double lr = 0.1;
  std::size_t steps = 500;
  std::size_t batch_questions = 12;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hops = {3};
  std::size_t collapse_patience = 50;
  std::size_t eval_samples = 40;
  std::size_t checkpoint_every = 0;
  JudgeBinding judge;
  std::string output_dir = "runs/default";
  std::size_t trajectory_every = 50;
};

namespace detail {

inline const ConfigKey* find_key(std::string_view path) {
  for (const auto& k : config_keys()) {
    if (k.path == path) return &k;
  }
  return nullptr;
}

inline nlohmann::json::json_pointer pointer_for(std::string_view path) {
  std::string p = "/";
  for (char c : path) p.push_back(c == '.' ? '/' : c);
  return nlohmann::json::json_pointer(p);
}

inline void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, nlohmann::json>>& out) {
  if (j.is_object() && !find_key(prefix)) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
    return;
  }
  out.emplace_back(prefix, j);
}

}  // namespace detail

inline nlohmann::json default_config_json() {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_keys()) j[detail::pointer_for(k.path)] = k.default_value;
  return j;
}

// Sets one dotted key, checking that it exists and the JSON type matches.
inline void set_config_value(nlohmann::json& cfg, const std::string& path, const nlohmann::json& value) {
  const auto* key = detail::find_key(path);
  if (!key) throw ConfigError("unknown config key '" + path + "'");
  const auto& d = key->default_value;
  const bool non_negative_int =
      value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  const bool ok = (d.is_number_integer() && non_negative_int) || (d.is_number_float() && value.is_number()) ||
                  (d.is_string() && value.is_string()) || (d.is_array() && value.is_array());
  if (!ok) {
    throw ConfigError("config key '" + path + "': expected " +
                      std::string(d.is_number_integer() ? "a non-negative integer"
                                  : d.is_number_float() ? "a number"
                                  : d.is_string()       ? "a string"
                                                        : "an array") +
                      ", got " + value.dump());
  }
  cfg[detail::pointer_for(path)] = value;
}

inline void merge_config_json(nlohmann::json& cfg, const nlohmann::json& layer) {
  if (!layer.is_object()) throw ConfigError("config file must hold a JSON object");
  std::vector<std::pair<std::string, nlohmann::json>> flat;
  detail::flatten(layer, "", flat);
  for (const auto& [path, value] : flat) set_config_value(cfg, path, value);
}

// "key=value"; value is parsed as JSON when it is valid JSON, else taken as a string.
inline void apply_override(nlohmann::json& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' must be key=value");
  const std::string path(text::trim(assignment.substr(0, eq)));
  const std::string raw(text::trim(assignment.substr(eq + 1)));
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  set_config_value(cfg, path, value);
}

// TIRES_OVERRIDES="a.b=1;c.d=x"; TIRES_JUDGE_ENDPOINT selects the external judge.
inline void apply_environment(nlohmann::json& cfg, const std::function<const char*(const char*)>& getenv_fn = ::getenv) {
  if (const char* ov = getenv_fn("TIRES_OVERRIDES"); ov && *ov) {
    std::string_view s(ov);
    while (!s.empty()) {
      const auto semi = s.find(';');
      const auto part = text::trim(s.substr(0, semi));
      if (!part.empty()) apply_override(cfg, part);
      if (semi == std::string_view::npos) break;
      s.remove_prefix(semi + 1);
    }
  }
  if (const char* ep = getenv_fn("TIRES_JUDGE_ENDPOINT"); ep && *ep) {
    set_config_value(cfg, "judge.endpoint", std::string(ep));
    set_config_value(cfg, "judge.mode", "external");
  }
}

namespace detail {

template <typename T>
T get(const nlohmann::json& cfg, const std::string& path) {
  return cfg.at(pointer_for(path)).get<T>();
}

inline void require(bool cond, const std::string& path, const std::string& constraint) {
  if (!cond) throw ConfigError("config key '" + path + "': " + constraint);
}

inline std::string choice(const nlohmann::json& cfg, const std::string& path, std::initializer_list<const char*> options) {
  const auto v = get<std::string>(cfg, path);
  for (const char* o : options) {
    if (v == o) return v;
  }
  std::string all;
  for (const char* o : options) all += (all.empty() ? "" : " | ") + std::string(o);
  throw ConfigError("config key '" + path + "': must be one of " + all + ", got '" + v + "'");
}

}  // namespace detail

// Converts a merged key tree into a validated Config.
inline Config config_from_json(const nlohmann::json& cfg) {
  using detail::get;
  using detail::require;
  Config c;
  try {
    c.world = {get<std::uint64_t>(cfg, "world.seed"), get<std::size_t>(cfg, "world.entities"),
               get<std::size_t>(cfg, "world.chains"), get<std::size_t>(cfg, "world.distractors")};
    require(c.world.n_chains >= 1, "world.chains", "must be >= 1");
    require(c.world.n_entities >= (kChainLength + 1) * c.world.n_chains, "world.entities",
            "must be >= 5 * world.chains");

    c.group_size = get<std::size_t>(cfg, "rollout.group_size");
    require(c.group_size >= 2, "rollout.group_size", "must be >= 2");
    c.rollout.max_steps = get<std::size_t>(cfg, "rollout.max_steps");
    require(c.rollout.max_steps >= 1, "rollout.max_steps", "must be >= 1");
    c.temperature = get<double>(cfg, "rollout.temperature");
    require(c.temperature > 0 && std::isfinite(c.temperature), "rollout.temperature", "must be > 0");
    c.rollout.top_k = get<std::size_t>(cfg, "rollout.top_k");
    require(c.rollout.top_k >= 1, "rollout.top_k", "must be >= 1");
    c.rollout.max_retrievals = get<std::size_t>(cfg, "rollout.max_retrievals");

    c.weights = {get<double>(cfg, "reward.w_t"), get<double>(cfg, "reward.w_s"), get<double>(cfg, "reward.w_r")};
    require(c.weights.w_t >= 0, "reward.w_t", "must be >= 0");
    require(c.weights.w_s >= 0, "reward.w_s", "must be >= 0");
    require(c.weights.w_r >= 0, "reward.w_r", "must be >= 0");
    c.schedule = detail::choice(cfg, "reward.schedule", {"main", "alg1"}) == "main" ? ScheduleMode::Main
                                                                                     : ScheduleMode::Alg1;

    auto& d = c.advantage.difficulty;
    d = {get<double>(cfg, "difficulty.A"), get<double>(cfg, "difficulty.B"), get<double>(cfg, "difficulty.rho0"),
         get<double>(cfg, "difficulty.k")};
    require(d.A > 0, "difficulty.A", "must be > 0");
    require(d.B >= d.A, "difficulty.B", "must be >= difficulty.A");
    require(std::isfinite(d.k) && d.k >= 0, "difficulty.k", "must be >= 0");
    require(std::isfinite(d.rho0), "difficulty.rho0", "must be finite");
    c.advantage.lambda_p = get<double>(cfg, "advantage.lambda_p");
    require(c.advantage.lambda_p >= 0, "advantage.lambda_p", "must be >= 0");
    c.advantage.penalty = detail::choice(cfg, "advantage.penalty", {"verbatim", "sta"}) == "verbatim"
                              ? PenaltyForm::Verbatim
                              : PenaltyForm::Sta;

    const auto fm = detail::choice(cfg, "filter.mode", {"prose", "alg1", "off"});
    c.advantage.filter = fm == "prose" ? FilterMode::Prose : fm == "alg1" ? FilterMode::Alg1 : FilterMode::Off;
    c.advantage.filter_low = get<double>(cfg, "filter.low");
    c.advantage.filter_high = get<double>(cfg, "filter.high");
    require(c.advantage.filter_low < c.advantage.filter_high, "filter.high", "must be > filter.low");
    c.persistence = detail::choice(cfg, "filter.persistence", {"skip", "remove"}) == "skip"
                        ? FilterPersistence::Skip
                        : FilterPersistence::Remove;

    c.optimizer = detail::choice(cfg, "optimizer.mode", {"grpo", "reinforce++"}) == "grpo" ? OptimizerMode::Grpo
                                                                                           : OptimizerMode::ReinforcePP;
    c.advantage.normalization =
        c.optimizer == OptimizerMode::Grpo ? NormalizationMode::Group : NormalizationMode::Batch;
    c.mu = get<std::size_t>(cfg, "optimizer.mu");
    require(c.mu >= 1, "optimizer.mu", "must be >= 1");
    c.epsilon = get<double>(cfg, "optimizer.epsilon");
    require(c.epsilon > 0 && c.epsilon < 1, "optimizer.epsilon", "must be in (0, 1)");
    c.beta = get<double>(cfg, "optimizer.beta");
    require(c.beta == 0.0, "optimizer.beta", "only 0 is supported");
    c.lr = get<double>(cfg, "optimizer.lr");
    require(c.lr > 0 && std::isfinite(c.lr), "optimizer.lr", "must be > 0");
    c.steps = get<std::size_t>(cfg, "optimizer.steps");
    require(c.steps >= 1, "optimizer.steps", "must be >= 1");
    c.batch_questions = get<std::size_t>(cfg, "optimizer.batch_questions");
    require(c.batch_questions >= 1, "optimizer.batch_questions", "must be >= 1");

    c.seed = get<std::uint64_t>(cfg, "train.seed");
    const auto& hops = cfg.at(detail::pointer_for("train.hops"));
    require(!hops.empty(), "train.hops", "must not be empty");
    c.hops.clear();
    for (const auto& h : hops) {
      require(h.is_number_integer() && h.get<std::int64_t>() >= 1 && h.get<std::int64_t>() <= 4, "train.hops",
              "entries must be integers in [1, 4]");
      c.hops.push_back(h.get<std::size_t>());
    }
    c.collapse_patience = get<std::size_t>(cfg, "train.collapse_patience");
    require(c.collapse_patience >= 1, "train.collapse_patience", "must be >= 1");
    c.eval_samples = get<std::size_t>(cfg, "train.eval_samples");
    require(c.eval_samples >= 1, "train.eval_samples", "must be >= 1");
    c.checkpoint_every = get<std::size_t>(cfg, "train.checkpoint_every");

    c.judge.mode = detail::choice(cfg, "judge.mode", {"oracle", "external"}) == "oracle" ? JudgeMode::Oracle
                                                                                         : JudgeMode::External;
    c.judge.endpoint = get<std::string>(cfg, "judge.endpoint");
    require(c.judge.mode == JudgeMode::Oracle || !c.judge.endpoint.empty(), "judge.endpoint",
            "required when judge.mode is external");
    c.judge.timeout_s = get<double>(cfg, "judge.timeout_s");
    require(c.judge.timeout_s > 0, "judge.timeout_s", "must be > 0");
    c.judge.max_in_flight = get<int>(cfg, "judge.max_in_flight");
    require(c.judge.max_in_flight >= 1, "judge.max_in_flight", "must be >= 1");

    c.output_dir = get<std::string>(cfg, "output.dir");
    c.trajectory_every = get<std::size_t>(cfg, "output.trajectory_every");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline nlohmann::json to_json(const Config& c) {
  nlohmann::json j = default_config_json();
  auto set = [&](const char* path, const nlohmann::json& v) { j[detail::pointer_for(path)] = v; };
  set("world.seed", c.world.seed);
  set("world.entities", c.world.n_entities);
  set("world.chains", c.world.n_chains);
  set("world.distractors", c.world.distractors);
  set("rollout.group_size", c.group_size);
  set("rollout.max_steps", c.rollout.max_steps);
  set("rollout.temperature", c.temperature);
  set("rollout.top_k", c.rollout.top_k);
  set("rollout.max_retrievals", c.rollout.max_retrievals);
  set("reward.w_t", c.weights.w_t);
  set("reward.w_s", c.weights.w_s);
  set("reward.w_r", c.weights.w_r);
  set("reward.schedule", to_string(c.schedule));
  set("difficulty.A", c.advantage.difficulty.A);
  set("difficulty.B", c.advantage.difficulty.B);
  set("difficulty.rho0", c.advantage.difficulty.rho0);
  set("difficulty.k", c.advantage.difficulty.k);
  set("advantage.lambda_p", c.advantage.lambda_p);
  set("advantage.penalty", to_string(c.advantage.penalty));
  set("filter.mode", to_string(c.advantage.filter));
  set("filter.low", c.advantage.filter_low);
  set("filter.high", c.advantage.filter_high);
  set("filter.persistence", c.persistence == FilterPersistence::Skip ? "skip" : "remove");
  set("optimizer.mode", c.optimizer == OptimizerMode::Grpo ? "grpo" : "reinforce++");
  set("optimizer.mu", c.mu);
  set("optimizer.epsilon", c.epsilon);
  set("optimizer.beta", c.beta);
  set("optimizer.lr", c.lr);
  set("optimizer.steps", c.steps);
  set("optimizer.batch_questions", c.batch_questions);
  set("train.seed", c.seed);
  set("train.hops", c.hops);
  set("train.collapse_patience", c.collapse_patience);
  set("train.eval_samples", c.eval_samples);
  set("train.checkpoint_every", c.checkpoint_every);
  set("judge.mode", c.judge.mode == JudgeMode::Oracle ? "oracle" : "external");
  set("judge.endpoint", c.judge.endpoint);
  set("judge.timeout_s", c.judge.timeout_s);
  set("judge.max_in_flight", c.judge.max_in_flight);
  set("output.dir", c.output_dir);
  set("output.trajectory_every", c.trajectory_every);
  return j;
}

// Hash of everything except the output location, so identical runs written
// to different directories share it.
inline std::string config_hash(const Config& c) {
  auto j = to_json(c);
  j["output"].erase("dir");
  return text::hex64(text::fnv1a64(j.dump()));
}

struct ConfigSources {
  std::optional<std::string> file;  // path, or "default" for built-ins only
  std::vector<std::string> overrides;
  bool use_environment = true;
};

inline Config load_config(const ConfigSources& src) {
  nlohmann::json cfg = default_config_json();
  if (src.file && *src.file != "default") {
    std::ifstream in(*src.file);
    if (!in) throw ConfigError("cannot open config file '" + *src.file + "'");
    nlohmann::json layer = nlohmann::json::parse(in, nullptr, false);
    if (layer.is_discarded()) throw ConfigError("config file '" + *src.file + "' is not valid JSON");
    merge_config_json(cfg, layer);
  }
  if (src.use_environment) apply_environment(cfg);
  for (const auto& o : src.overrides) apply_override(cfg, o);
  return config_from_json(cfg);
}

inline Config load_config(const std::string& path) { return load_config(ConfigSources{path, {}, false}); }

inline std::string config_keys_help() {
  std::string out = "Config keys (dotted path, default, description):\n";
  for (const auto& k : config_keys()) {
    std::string line = "  " + k.path;
    line.resize(std::max<std::size_t>(line.size() + 1, 30), ' ');
    std::string def = k.default_value.dump();
    def.resize(std::max<std::size_t>(def.size() + 1, 14), ' ');
    line += def + k.doc;
    if (!k.reference_value.empty()) line += " [reference: " + k.reference_value + "]";
    out += line + "\n";
  }
  return out;
}

}  // namespace tiresrag

#endif  // TIRESRAG_CONFIG_HPP
