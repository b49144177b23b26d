#pragma once
#ifndef TIRESRAG_POLICY_HPP
#define TIRESRAG_POLICY_HPP

// A tabular softmax policy over abstract agent states, the episode simulator
// that turns its decisions into tagged trajectories, and the clipped
// surrogate with its exact gradient.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "tiresrag/rng.hpp"
#include "tiresrag/trace.hpp"
#include "tiresrag/world.hpp"

namespace tiresrag {

enum class Action : std::uint8_t {
  SearchHop1,
  SearchHop2,
  SearchHop3,
  SearchHop4,
  SearchNoise,
  AnswerBest,
  AnswerRandom,
  Reflect,
  Stop,
};

inline constexpr std::size_t kNumActions = 9;

inline constexpr std::size_t action_index(Action a) { return static_cast<std::size_t>(a); }
inline constexpr Action action_at(std::size_t i) { return static_cast<Action>(i); }
inline constexpr Action search_hop(std::size_t hop) { return action_at(hop - 1); }  // hop is 1-based
inline constexpr bool is_search_hop(Action a) { return action_index(a) < kMaxHops; }

inline std::string_view to_string(Action a) {
  switch (a) {
    case Action::SearchHop1: return "search_hop1";
    case Action::SearchHop2: return "search_hop2";
    case Action::SearchHop3: return "search_hop3";
    case Action::SearchHop4: return "search_hop4";
    case Action::SearchNoise: return "search_noise";
    case Action::AnswerBest: return "answer_best";
    case Action::AnswerRandom: return "answer_random";
    case Action::Reflect: return "reflect";
    case Action::Stop: return "stop";
  }
  return "stop";
}

enum class Phase : std::uint8_t {
  Gathering,   // before the first answer
  Answered,    // first answer given; reflect or stop
  Reflecting,  // reflection reopened the search; one more answer allowed
};

// The part of the agent state the policy conditions on.
struct StateKey {
  std::uint8_t hops = 1;
  std::uint8_t resolved = 0;  // bit j set once hop j+1's fact was retrieved
  Phase phase = Phase::Gathering;

  friend auto operator<=>(const StateKey&, const StateKey&) = default;
};

inline std::string to_string(const StateKey& k) {
  static constexpr std::array<std::string_view, 3> phases = {"gathering", "answered", "reflecting"};
  return "h" + std::to_string(k.hops) + ":m" + std::to_string(k.resolved) + ":" +
         std::string(phases[static_cast<std::size_t>(k.phase)]);
}

struct AgentState {
  std::uint8_t resolved_hops = 0;
  std::size_t steps_taken = 0;
  bool answered_once = false;
  bool reflecting = false;
  std::size_t retrievals = 0;
  std::size_t answers = 0;
  bool stopped = false;
};

using ActionMask = std::uint16_t;

inline bool is_legal(ActionMask m, Action a) { return (m >> action_index(a)) & 1u; }

using ActionRow = std::array<double, kNumActions>;

// Preferences default to 0 (uniform over legal actions) for unseen states.
class TabularPolicy {
public:
  explicit TabularPolicy(double temperature = 1.0) : temperature_(temperature) {
    if (!(temperature > 0.0)) throw std::invalid_argument("policy temperature must be positive");
  }

  double temperature() const { return temperature_; }

  const ActionRow& row(const StateKey& k) const {
    static const ActionRow zeros{};
    auto it = prefs_.find(k);
    return it == prefs_.end() ? zeros : it->second;
  }
  ActionRow& row(const StateKey& k) { return prefs_.try_emplace(k, ActionRow{}).first->second; }

  double preference(const StateKey& k, Action a) const { return row(k)[action_index(a)]; }
  void set_preference(const StateKey& k, Action a, double v) { row(k)[action_index(a)] = v; }

  const std::map<StateKey, ActionRow>& table() const { return prefs_; }

  // Softmax over legal actions; illegal actions get probability exactly 0.
  ActionRow probabilities(const StateKey& k, ActionMask legal) const {
    const auto& r = row(k);
    double mx = -INFINITY;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      if (is_legal(legal, action_at(a))) mx = std::max(mx, r[a] / temperature_);
    }
    ActionRow p{};
    double z = 0.0;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      if (!is_legal(legal, action_at(a))) continue;
      p[a] = std::exp(r[a] / temperature_ - mx);
      z += p[a];
    }
    for (auto& x : p) x /= z;
    return p;
  }

  double log_prob(const StateKey& k, ActionMask legal, Action a) const {
    if (!is_legal(legal, a)) return -INFINITY;
    const auto& r = row(k);
    double mx = -INFINITY;
    for (std::size_t i = 0; i < kNumActions; ++i) {
      if (is_legal(legal, action_at(i))) mx = std::max(mx, r[i] / temperature_);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < kNumActions; ++i) {
      if (is_legal(legal, action_at(i))) z += std::exp(r[i] / temperature_ - mx);
    }
    return r[action_index(a)] / temperature_ - mx - std::log(z);
  }

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

private:
  double temperature_;
  std::map<StateKey, ActionRow> prefs_;
};

// Additive gradient over the same table layout.
using PolicyGradient = std::map<StateKey, ActionRow>;

inline void apply_gradient(TabularPolicy& policy, const PolicyGradient& g, double lr) {
  for (const auto& [k, row] : g) {
    auto& target = policy.row(k);
    for (std::size_t a = 0; a < kNumActions; ++a) target[a] += lr * row[a];
  }
}

struct RolloutParams {
  std::size_t max_steps = 12;
  std::size_t max_retrievals = 8;
  std::size_t top_k = 5;
};

struct Decision {
  StateKey key;
  ActionMask legal = 0;
  Action action = Action::Stop;
  double logp = 0.0;
};

struct RolloutRecord {
  Trajectory trajectory;
  std::vector<Decision> decisions;

  std::vector<double> logps() const {
    std::vector<double> out;
    out.reserve(decisions.size());
    for (const auto& d : decisions) out.push_back(d.logp);
    return out;
  }
};

inline constexpr std::string_view kUnknownAnswer = "unknown";

// One agent episode on one question. Copyable, so callers can branch it.
class Episode {
public:
  Episode(const WorldSpec& world, const Question& q, RolloutParams params, std::uint64_t seed)
      : world_(&world), q_(&q), params_(params), rng_(seed) {
    if (q.hops < 1 || q.hops > kMaxHops || q.hop_chain.size() != q.hops) {
      throw WorldError("episode: malformed question " + q.question_id);
    }
    traj_.question_id = q.question_id;
  }

  const AgentState& state() const { return state_; }
  const Trajectory& trajectory() const { return traj_; }
  Trajectory& trajectory() { return traj_; }

  bool done() const { return state_.stopped || state_.steps_taken >= params_.max_steps || legal() == 0; }

  StateKey key() const {
    const Phase phase = !state_.answered_once ? Phase::Gathering
                        : state_.reflecting   ? Phase::Reflecting
                                              : Phase::Answered;
    return {static_cast<std::uint8_t>(q_->hops), state_.resolved_hops, phase};
  }

  ActionMask legal() const {
    if (state_.stopped || state_.answers >= 2) return 0;
    ActionMask m = 0;
    auto allow = [&](Action a) { m |= static_cast<ActionMask>(1u << action_index(a)); };
    if (state_.answered_once && !state_.reflecting) {
      if (state_.answers == 1) allow(Action::Reflect);
      allow(Action::Stop);
      return m;
    }
    if (state_.retrievals < params_.max_retrievals) {
      for (std::size_t h = 1; h <= q_->hops; ++h) allow(search_hop(h));
      allow(Action::SearchNoise);
    }
    allow(Action::AnswerBest);
    allow(Action::AnswerRandom);
    return m;
  }

  // Number of leading hops whose facts have been retrieved.
  std::size_t resolved_prefix() const {
    std::size_t m = 0;
    while (m < q_->hops && ((state_.resolved_hops >> m) & 1u)) ++m;
    return m;
  }

  void apply(Action a) {
    if (!is_legal(legal(), a)) throw std::logic_error("episode: illegal action " + std::string(to_string(a)));
    ++state_.steps_taken;
    const auto& chain = q_->hop_chain;
    switch (a) {
      case Action::SearchHop1:
      case Action::SearchHop2:
      case Action::SearchHop3:
      case Action::SearchHop4: {
        const std::size_t j = action_index(a);  // 0-based hop
        const auto& hop = chain[j];
        const bool subject_known = j == 0 || ((state_.resolved_hops >> (j - 1)) & 1u);
        if (subject_known) {
          traj_.push(SegmentKind::Think, "I need to find the " + hop.relation + " of " + hop.subject + ".");
          search(hop.relation + " of " + hop.subject);
        } else {
          const auto& prev = chain[j - 1];
          traj_.push(SegmentKind::Think, "I need the " + hop.relation + " of the " + prev.relation +
                                             ", but I do not know who that is yet.");
          search(hop.relation + " of the " + prev.relation);
        }
        break;
      }
      case Action::SearchNoise: {
        const auto& e = world_->entities[rng_.index(world_->entities.size())];
        const auto& r = world_->relations[rng_.index(world_->relations.size())];
        traj_.push(SegmentKind::Think, "Maybe " + e + " is relevant.");
        search(r + " of " + e);
        break;
      }
      case Action::AnswerBest: {
        const auto m = resolved_prefix();
        if (m == 0) {
          traj_.push(SegmentKind::Think, "I could not determine the answer from the evidence.");
          answer(std::string(kUnknownAnswer));
        } else {
          const auto& obj = chain[m - 1].object;
          traj_.push(SegmentKind::Think, "So the answer is " + obj + ".");
          answer(obj);
        }
        break;
      }
      case Action::AnswerRandom: {
        const auto& e = world_->entities[rng_.index(world_->entities.size())];
        traj_.push(SegmentKind::Think, "I guess the answer is " + e + ".");
        answer(e);
        break;
      }
      case Action::Reflect:
        traj_.push(SegmentKind::Think, "Let me re-examine my previous answer against the evidence.");
        state_.reflecting = true;
        break;
      case Action::Stop: state_.stopped = true; break;
    }
  }

  Rng& rng() { return rng_; }

private:
  void search(const std::string& query) {
    traj_.push(SegmentKind::Search, query);
    const auto res = retrieve(*world_, query, params_.top_k);
    const auto info = render_information(res);
    traj_.push(SegmentKind::Information, info);
    ++state_.retrievals;
    for (std::size_t h = 0; h < q_->hops; ++h) {
      if (info.find(fact_sentence(q_->hop_chain[h])) != std::string::npos) {
        state_.resolved_hops = static_cast<std::uint8_t>(state_.resolved_hops | (1u << h));
      }
    }
  }

  void answer(std::string text) {
    traj_.push(SegmentKind::Answer, std::move(text));
    ++state_.answers;
    state_.answered_once = true;
    state_.reflecting = false;
    if (state_.answers >= 2) state_.stopped = true;
  }

  const WorldSpec* world_;
  const Question* q_;
  RolloutParams params_;
  Rng rng_;
  AgentState state_;
  Trajectory traj_;
};

inline Action sample_action(const ActionRow& probs, ActionMask legal, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = kNumActions;
  for (std::size_t a = 0; a < kNumActions; ++a) {
    if (!is_legal(legal, action_at(a))) continue;
    acc += probs[a];
    last = a;
    if (u < acc) return action_at(a);
  }
  return action_at(last);
}

inline RolloutRecord rollout_one(const TabularPolicy& policy, const WorldSpec& world, const Question& q,
                                 const RolloutParams& params, std::uint64_t seed) {
  Episode ep(world, q, params, seed);
  RolloutRecord rec;
  while (!ep.done()) {
    const auto key = ep.key();
    const auto legal = ep.legal();
    const auto probs = policy.probabilities(key, legal);
    const auto a = sample_action(probs, legal, ep.rng());
    const double lp = policy.log_prob(key, legal, a);
    rec.decisions.push_back({key, legal, a, lp});
    ep.trajectory().step_logprobs.push_back(lp);
    ep.apply(a);
  }
  rec.trajectory = std::move(ep.trajectory());
  return rec;
}

// G rollouts, each on its own stream derived from `seed`.
inline std::vector<RolloutRecord> rollout(const TabularPolicy& policy, const WorldSpec& world, const Question& q,
                                          std::size_t group_size, const RolloutParams& params, std::uint64_t seed) {
  if (group_size < 2) throw std::invalid_argument("rollout: group size must be at least 2");
  std::vector<RolloutRecord> out;
  out.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    out.push_back(rollout_one(policy, world, q, params, derive_seed(seed, i)));
  }
  return out;
}

// ---- clipped surrogate ------------------------------------------------------------

inline double clipped_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

// Per-step mean of min(r A, clip(r, 1-eps, 1+eps) A), r = exp(new - old).
inline double grpo_surrogate(const std::vector<double>& old_logps, const std::vector<double>& new_logps,
                             double advantage, double epsilon) {
  if (old_logps.size() != new_logps.size()) throw std::invalid_argument("grpo_surrogate: length mismatch");
  if (old_logps.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < old_logps.size(); ++i) {
    sum += clipped_term(std::exp(new_logps[i] - old_logps[i]), advantage, epsilon);
  }
  return sum / static_cast<double>(old_logps.size());
}

struct UpdateItem {
  const std::vector<Decision>* decisions = nullptr;  // actions and old log-probs
  double advantage = 0.0;
};

inline std::vector<double> current_logps(const TabularPolicy& policy, const std::vector<Decision>& ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (const auto& d : ds) out.push_back(policy.log_prob(d.key, d.legal, d.action));
  return out;
}

// Sum over items of the per-rollout surrogate.
inline double surrogate_objective(const TabularPolicy& policy, const std::vector<UpdateItem>& batch, double epsilon) {
  double total = 0.0;
  for (const auto& item : batch) {
    std::vector<double> old;
    old.reserve(item.decisions->size());
    for (const auto& d : *item.decisions) old.push_back(d.logp);
    total += grpo_surrogate(old, current_logps(policy, *item.decisions), item.advantage, epsilon);
  }
  return total;
}

// Exact gradient of surrogate_objective. A step contributes only where the
// unclipped branch attains the min; there d/dθ = A r ∇log π.
inline PolicyGradient surrogate_gradient(const TabularPolicy& policy, const std::vector<UpdateItem>& batch,
                                         double epsilon) {
  PolicyGradient g;
  const double inv_temp = 1.0 / policy.temperature();
  for (const auto& item : batch) {
    const auto& ds = *item.decisions;
    if (ds.empty()) continue;
    const double scale = 1.0 / static_cast<double>(ds.size());
    for (const auto& d : ds) {
      const double lp = policy.log_prob(d.key, d.legal, d.action);
      const double ratio = std::exp(lp - d.logp);
      const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
      if (ratio * item.advantage > clipped * item.advantage) continue;
      const double coef = scale * item.advantage * ratio * inv_temp;
      const auto probs = policy.probabilities(d.key, d.legal);
      auto& row = g[d.key];
      for (std::size_t a = 0; a < kNumActions; ++a) {
        if (!is_legal(d.legal, action_at(a))) continue;
        row[a] += coef * ((a == action_index(d.action) ? 1.0 : 0.0) - probs[a]);
      }
    }
  }
  return g;
}

class UpdateError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// mu ascent passes on the summed surrogate; old log-probs stay fixed across
// passes. beta is the KL coefficient and must be zero.
inline TabularPolicy update(TabularPolicy policy, const std::vector<UpdateItem>& batch, std::size_t mu, double lr,
                            double epsilon, double beta = 0.0) {
  if (beta != 0.0) throw UpdateError("update: KL regularization (beta != 0) is not supported");
  for (std::size_t pass = 0; pass < mu; ++pass) {
    const auto g = surrogate_gradient(policy, batch, epsilon);
    for (const auto& [k, row] : g) {
      for (double v : row) {
        if (!std::isfinite(v)) throw UpdateError("update: non-finite gradient at state " + to_string(k));
      }
    }
    apply_gradient(policy, g, lr);
  }
  return policy;
}

// Hand-built near-deterministic optimum: search the first unresolved hop,
// answer once every hop is resolved, then stop.
inline TabularPolicy oracle_policy(double strength = 50.0, double temperature = 1.0) {
  TabularPolicy p(temperature);
  for (std::size_t h = 1; h <= kMaxHops; ++h) {
    for (unsigned mask = 0; mask < (1u << h); ++mask) {
      std::size_t m = 0;
      while (m < h && ((mask >> m) & 1u)) ++m;
      const Action best = m < h ? search_hop(m + 1) : Action::AnswerBest;
      for (Phase ph : {Phase::Gathering, Phase::Reflecting}) {
        p.set_preference({static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(mask), ph}, best, strength);
      }
      p.set_preference({static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(mask), Phase::Answered}, Action::Stop,
                       strength);
    }
  }
  return p;
}

// ---- checkpoint table ----------------------------------------------------------

inline nlohmann::json policy_to_json(const TabularPolicy& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [k, row] : p.table()) {
    rows.push_back({{"hops", k.hops},
                    {"resolved", k.resolved},
                    {"phase", static_cast<int>(k.phase)},
                    {"preferences", std::vector<double>(row.begin(), row.end())}});
  }
  return {{"temperature", p.temperature()}, {"states", rows}};
}

inline TabularPolicy policy_from_json(const nlohmann::json& j) {
  TabularPolicy p(j.at("temperature").get<double>());
  for (const auto& r : j.at("states")) {
    StateKey k;
    k.hops = r.at("hops").get<std::uint8_t>();
    k.resolved = r.at("resolved").get<std::uint8_t>();
    const int phase = r.at("phase").get<int>();
    if (phase < 0 || phase > 2) throw std::invalid_argument("checkpoint: bad phase");
    k.phase = static_cast<Phase>(phase);
    const auto prefs = r.at("preferences").get<std::vector<double>>();
    if (prefs.size() != kNumActions) throw std::invalid_argument("checkpoint: preference row has wrong width");
    auto& row = p.row(k);
    std::copy(prefs.begin(), prefs.end(), row.begin());
  }
  return p;
}

}  // namespace tiresrag

#endif  // TIRESRAG_POLICY_HPP
