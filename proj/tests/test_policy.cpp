#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "support.hpp"
#include "tiresrag/metrics.hpp"
#include "tiresrag/policy.hpp"
#include "tiresrag/reward.hpp"

using namespace tiresrag;
using tiresrag::testing::default_world;

namespace {

TabularPolicy random_policy(std::uint64_t seed, const std::vector<StateKey>& keys, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  TabularPolicy p;
  for (const auto& k : keys) {
    for (std::size_t a = 0; a < kNumActions; ++a) p.set_preference(k, action_at(a), n(rng));
  }
  return p;
}

std::vector<StateKey> all_keys(std::uint8_t hops) {
  std::vector<StateKey> keys;
  for (unsigned m = 0; m < (1u << hops); ++m) {
    for (Phase ph : {Phase::Gathering, Phase::Answered, Phase::Reflecting}) {
      keys.push_back({hops, static_cast<std::uint8_t>(m), ph});
    }
  }
  return keys;
}

}  // namespace

TEST(Policy, IllegalActionsHaveZeroProbability) {
  const auto p = random_policy(1, all_keys(3), 3.0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto k = all_keys(3)[rng() % all_keys(3).size()];
    const ActionMask legal = static_cast<ActionMask>(1 + rng() % ((1u << kNumActions) - 1));
    const auto probs = p.probabilities(k, legal);
    double sum = 0;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      if (!is_legal(legal, action_at(a))) {
        ASSERT_EQ(probs[a], 0.0);
        ASSERT_EQ(p.log_prob(k, legal, action_at(a)), -INFINITY);
      } else {
        ASSERT_NEAR(std::log(probs[a]), p.log_prob(k, legal, action_at(a)), 1e-12);
      }
      sum += probs[a];
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Episode, PhaseRules) {
  const auto& w = default_world();
  const auto q = question_for_chain(w, 0, 2);
  Episode ep(w, q, {}, 1);
  EXPECT_FALSE(is_legal(ep.legal(), Action::Reflect));
  EXPECT_FALSE(is_legal(ep.legal(), Action::Stop));
  EXPECT_FALSE(is_legal(ep.legal(), Action::SearchHop3));  // only two hops
  ep.apply(Action::SearchHop1);
  EXPECT_EQ(ep.resolved_prefix(), 1u);
  ep.apply(Action::AnswerBest);
  EXPECT_EQ(ep.key().phase, Phase::Answered);
  EXPECT_EQ(ep.legal(), static_cast<ActionMask>((1u << action_index(Action::Reflect)) |
                                                (1u << action_index(Action::Stop))));
  ep.apply(Action::Reflect);
  EXPECT_EQ(ep.key().phase, Phase::Reflecting);
  ep.apply(Action::SearchHop2);
  EXPECT_EQ(ep.resolved_prefix(), 2u);
  ep.apply(Action::AnswerBest);
  EXPECT_TRUE(ep.done());
  const auto& t = ep.trajectory();
  EXPECT_TRUE(parse_trajectory(render_trajectory(t)).ok());
  EXPECT_EQ(intermediate_answers(t), (std::vector<std::string>{q.hop_chain[0].object, q.gold_answer}));
  EXPECT_EQ(reflect_reward(intermediate_answers(t), q.gold_answer), 1);
  EXPECT_THROW(ep.apply(Action::Stop), std::logic_error);
}

TEST(Episode, SearchBeforeSubjectIsKnownOmitsTheName) {
  const auto& w = default_world();
  for (std::size_t c = 0; c < w.chains.size(); ++c) {
    const auto q = question_for_chain(w, c, 3);
    Episode ep(w, q, {}, 1);
    ep.apply(Action::SearchHop3);
    const auto& query = ep.trajectory().segments[1].text;
    EXPECT_EQ(query.find(q.hop_chain[2].subject), std::string::npos) << query;
    EXPECT_NE(query.find(q.hop_chain[2].relation), std::string::npos) << query;
  }
}

TEST(Rollout, OraclePolicyIsPerfect) {
  const auto& w = default_world();
  const auto p = oracle_policy();
  for (std::size_t h = 1; h <= kMaxHops; ++h) {
    for (const auto& q : all_questions(w, h)) {
      const auto rec = rollout_one(p, w, q, {}, 3);
      EXPECT_EQ(final_answer(rec.trajectory), q.gold_answer);
      EXPECT_EQ(sufficiency_point(w, q, rec.trajectory), std::optional<std::size_t>(h));
      EXPECT_EQ(classify_thinking(w, q, rec.trajectory), ThinkingCategory::GoodThinking);
    }
  }
}

TEST(Rollout, ImmediateRandomAnswerUnderthinks) {
  const auto& w = default_world();
  TabularPolicy p;
  p.set_preference({3, 0, Phase::Gathering}, Action::AnswerRandom, 60.0);
  p.set_preference({3, 0, Phase::Answered}, Action::Stop, 60.0);
  const auto q = question_for_chain(w, 1, 3);
  const auto rec = rollout_one(p, w, q, {}, 5);
  EXPECT_EQ(rec.trajectory.retrieval_count(), 0u);
  EXPECT_EQ(oracle_sufficient(w, q, strip_answers(rec.trajectory)), 0);
  EXPECT_EQ(classify_thinking(w, q, rec.trajectory), ThinkingCategory::Underthinking);
}

TEST(Rollout, GrammarValidDeterministicAndLogged) {
  const auto& w = default_world();
  const auto p = random_policy(4, all_keys(3));
  const auto q = question_for_chain(w, 2, 3);
  const auto a = rollout(p, w, q, 5, {}, 77);
  const auto b = rollout(p, w, q, 5, {}, 77);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].trajectory.segments, b[i].trajectory.segments);
    EXPECT_EQ(a[i].logps(), b[i].logps());
    for (const auto& d : validate_trajectory(a[i].trajectory)) {
      if (d.code != DiagnosticCode::MissingAnswer) {
        EXPECT_TRUE(is_warning(d.code)) << to_string(d.code);
      }
    }
    EXPECT_EQ(a[i].trajectory.step_logprobs, a[i].logps());
    EXPECT_LE(a[i].decisions.size(), RolloutParams{}.max_steps);
    EXPECT_LE(a[i].trajectory.count(SegmentKind::Answer), 2u);
  }
  EXPECT_THROW(rollout(p, w, q, 1, {}, 1), std::invalid_argument);
}

// Enumerate every action sequence on a 1-hop question with max_steps = 3:
// probabilities sum to one, and each sampled rollout's summed log-prob equals
// the log of its path probability.
TEST(Rollout, LogProbsMatchExhaustiveEnumeration) {
  const auto& w = default_world();
  const auto q = question_for_chain(w, 0, 1);
  // the two actions with random outcomes get probability 0, so an action
  // sequence determines the path
  auto p = random_policy(5, all_keys(1), 1.5);
  for (const auto& k : all_keys(1)) {
    p.set_preference(k, Action::SearchNoise, -1e9);
    p.set_preference(k, Action::AnswerRandom, -1e9);
  }
  RolloutParams params;
  params.max_steps = 3;
  std::map<std::vector<Action>, double> paths;
  std::function<void(Episode, std::vector<Action>, double)> walk = [&](Episode ep, std::vector<Action> acts,
                                                                      double prob) {
    if (ep.done()) {
      paths[acts] += prob;
      return;
    }
    const auto legal = ep.legal();
    const auto probs = p.probabilities(ep.key(), legal);
    for (std::size_t a = 0; a < kNumActions; ++a) {
      if (!is_legal(legal, action_at(a)) || probs[a] == 0.0) continue;
      Episode next = ep;
      next.apply(action_at(a));
      auto more = acts;
      more.push_back(action_at(a));
      walk(next, more, prob * probs[a]);
    }
  };
  walk(Episode(w, q, params, 0), {}, 1.0);
  double total = 0;
  for (const auto& [_, pr] : paths) total += pr;
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto rec = rollout_one(p, w, q, params, s);
    std::vector<Action> acts;
    double lp = 0;
    for (const auto& d : rec.decisions) {
      acts.push_back(d.action);
      lp += d.logp;
    }
    ASSERT_TRUE(paths.count(acts));
    EXPECT_NEAR(lp, std::log(paths[acts]), 1e-9);
  }
}

TEST(Surrogate, HandExamples) {
  EXPECT_EQ(grpo_surrogate({-1.0, -2.0}, {-1.0, -2.0}, 1.0, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(grpo_surrogate({0.0}, {std::log(1.5)}, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(grpo_surrogate({0.0}, {std::log(0.5)}, -1.0, 0.2), -0.8);
  EXPECT_EQ(grpo_surrogate({}, {}, 1.0, 0.2), 0.0);
  EXPECT_THROW(grpo_surrogate({0.0}, {}, 1.0, 0.2), std::invalid_argument);
}

TEST(Surrogate, BruteForceTwoBranches) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double ratio = 3 * u(rng), adv = -3 + 6 * u(rng), eps = 0.01 + 0.5 * u(rng);
    const double unclipped = ratio * adv;
    const double c = ratio < 1 - eps ? 1 - eps : ratio > 1 + eps ? 1 + eps : ratio;
    const double expected = unclipped < c * adv ? unclipped : c * adv;
    ASSERT_EQ(clipped_term(ratio, adv, eps), expected);
  }
}

TEST(Update, ZeroAdvantageIsAFixedPoint) {
  const auto& w = default_world();
  const auto p = random_policy(6, all_keys(2));
  const auto rolls = rollout(p, w, question_for_chain(w, 0, 2), 4, {}, 1);
  std::vector<UpdateItem> batch;
  for (const auto& r : rolls) batch.push_back({&r.decisions, 0.0});
  EXPECT_TRUE(update(p, batch, 2, 0.5, 0.2) == p);
}

TEST(Update, PositiveAdvantageRaisesRolloutProbability) {
  const auto& w = default_world();
  const auto p = random_policy(7, all_keys(2));
  const auto rolls = rollout(p, w, question_for_chain(w, 1, 2), 2, {}, 3);
  std::vector<UpdateItem> batch = {{&rolls[0].decisions, 1.0}};
  const auto after = update(p, batch, 1, 0.1, 0.2);
  double before_lp = 0, after_lp = 0;
  for (double x : current_logps(p, rolls[0].decisions)) before_lp += x;
  for (double x : current_logps(after, rolls[0].decisions)) after_lp += x;
  EXPECT_GT(after_lp, before_lp);
}

TEST(Update, RejectsKlAndNonFinite) {
  const auto& w = default_world();
  const auto p = random_policy(8, all_keys(1));
  const auto rolls = rollout(p, w, question_for_chain(w, 0, 1), 2, {}, 3);
  std::vector<UpdateItem> batch = {{&rolls[0].decisions, 1.0}};
  EXPECT_THROW(update(p, batch, 1, 0.1, 0.2, 0.01), UpdateError);
  std::vector<UpdateItem> bad = {{&rolls[0].decisions, NAN}};
  EXPECT_THROW(update(p, bad, 1, 0.1, 0.2), UpdateError);
}

TEST(Update, GradientMatchesFiniteDifferences) {
  const auto& w = default_world();
  std::mt19937_64 rng(21);
  for (int inst = 0; inst < 5; ++inst) {
    const auto q = question_for_chain(w, inst % w.chains.size(), 2);
    const auto old = random_policy(100 + inst, all_keys(2));
    const auto rolls = rollout(old, w, q, 5, {}, rng());
    std::vector<UpdateItem> batch;
    std::normal_distribution<double> n(0, 1);
    for (const auto& r : rolls) batch.push_back({&r.decisions, n(rng)});
    // move away from ratio = 1 so that some terms clip
    auto cur = random_policy(200 + inst, all_keys(2), 0.05);
    for (const auto& [k, row] : old.table()) {
      for (std::size_t a = 0; a < kNumActions; ++a) cur.row(k)[a] += row[a];
    }
    const auto g = surrogate_gradient(cur, batch, 0.2);
    const double h = 1e-5;
    for (const auto& [k, row] : g) {
      for (std::size_t a = 0; a < kNumActions; ++a) {
        auto plus = cur, minus = cur;
        plus.row(k)[a] += h;
        minus.row(k)[a] -= h;
        const double fd = (surrogate_objective(plus, batch, 0.2) - surrogate_objective(minus, batch, 0.2)) / (2 * h);
        const double scale = std::max({std::abs(fd), std::abs(row[a]), 1e-3});
        EXPECT_LE(std::abs(fd - row[a]) / scale, 1e-5) << to_string(k) << " action " << a;
      }
    }
  }
}

TEST(Policy, CheckpointRoundTrip) {
  const auto p = random_policy(9, all_keys(3));
  const auto back = policy_from_json(nlohmann::json::parse(policy_to_json(p).dump()));
  EXPECT_TRUE(back == p);
  EXPECT_THROW(policy_from_json(nlohmann::json::parse(R"({"temperature":1,"states":[{"hops":1,"resolved":0,"phase":7,"preferences":[0,0,0,0,0,0,0,0,0]}]})")),
               std::invalid_argument);
}
