#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tiresrag/reward.hpp"

using namespace tiresrag;
using tiresrag::testing::add_search;
using tiresrag::testing::default_world;
using tiresrag::testing::fixture;
using tiresrag::testing::perfect_trajectory;

TEST(AnswerReward, Examples) {
  EXPECT_EQ(answer_reward("Drusus Julius Caesar", "Drusus Julius Caesar"), 1.0);
  // tokens {stafford, in, staffordshire} vs {staffordshire}: P = 1/3, R = 1
  EXPECT_DOUBLE_EQ(answer_reward("Stafford, in Staffordshire", "Staffordshire"), 2.0 * (1.0 / 3.0) / (1.0 / 3.0 + 1.0));
  EXPECT_DOUBLE_EQ(answer_reward("Stafford, in Staffordshire", "Staffordshire"), 0.5);
  EXPECT_EQ(answer_reward("", "X"), 0.0);
  EXPECT_EQ(answer_reward("the", "The"), 0.0);  // both normalize to empty
}

TEST(AnswerReward, Symmetric) {
  std::mt19937_64 rng(1);
  const std::vector<std::string> words = {"a", "the", "Tiberius", "julius", "Caesar", "drusus", "of", "x,", "X"};
  for (int i = 0; i < 5000; ++i) {
    std::string p, g;
    for (std::size_t j = rng() % 5; j > 0; --j) p += words[rng() % words.size()] + " ";
    for (std::size_t j = rng() % 5; j > 0; --j) g += words[rng() % words.size()] + " ";
    ASSERT_EQ(answer_reward(p, g), answer_reward(g, p)) << p << " | " << g;
  }
}

TEST(ReflectReward, Arms) {
  EXPECT_EQ(reflect_reward({"Tiberius", "Drusus Julius Caesar"}, "Drusus Julius Caesar"), 1);
  EXPECT_EQ(reflect_reward({"Staffordshire", "Fiddington"}, "Staffordshire"), -1);
  EXPECT_EQ(reflect_reward({"X"}, "X"), 0);
  EXPECT_EQ(reflect_reward({}, "X"), 0);
  EXPECT_EQ(reflect_reward({"X", "X"}, "X"), 0);
  EXPECT_EQ(reflect_reward({"Y", "Z"}, "X"), 0);
  // more than two answers: first and last decide
  EXPECT_EQ(reflect_reward({"Y", "X", "Z", "X"}, "X"), 1);
  EXPECT_EQ(reflect_reward({"X", "Y", "X"}, "X"), 0);
  EXPECT_EQ(reflect_reward({"Y", "X", "Z", "in X"}, "X"), 1);
}

TEST(ReflectReward, AntisymmetricUnderReversal) {
  const std::vector<std::pair<std::string, std::string>> pairs = {{"Tiberius", "Drusus Julius Caesar"},
                                                                  {"Fiddington", "Staffordshire"}};
  for (const auto& [wrong, right] : pairs) {
    EXPECT_EQ(reflect_reward({wrong, right}, right), -reflect_reward({right, wrong}, right));
  }
}

TEST(DynamicWeight, Values) {
  EXPECT_EQ(dynamic_weight(90, 100), 0.5);
  EXPECT_EQ(dynamic_weight(450, 500), 0.5);
  EXPECT_NEAR(dynamic_weight(0, 100), 1.0 / (1.0 + std::exp(-9.0)), 1e-15);
  EXPECT_NEAR(dynamic_weight(0, 100), 0.999877, 1e-6);
  EXPECT_NEAR(dynamic_weight(100, 100), 0.268941, 1e-6);
  EXPECT_THROW(dynamic_weight(1, 0), std::invalid_argument);
}

TEST(DynamicWeight, StrictlyDecreasingAndBounded) {
  for (double T : {10.0, 100.0, 500.0}) {
    double prev = 2.0;
    for (int t = 0; t <= static_cast<int>(T); ++t) {
      const double a = dynamic_weight(t, T);
      ASSERT_GT(a, 0.0);
      ASSERT_LE(a, 1.0);  // 1/(1+e^-45) rounds to 1
      ASSERT_LE(a, prev);
      if (prev < 1.0 - 1e-12) ASSERT_LT(a, prev);
      prev = a;
    }
  }
}

TEST(DynamicWeight, TransposedVariant) {
  // (T - 0.9 t)/10: tiny at t = 0 for a long run, grows with t
  EXPECT_NEAR(dynamic_weight(0, 100, ScheduleMode::Alg1), 1.0 / (1.0 + std::exp(10.0)), 1e-15);
  EXPECT_LT(dynamic_weight(0, 100, ScheduleMode::Alg1), dynamic_weight(100, 100, ScheduleMode::Alg1));
}

TEST(TotalReward, Examples) {
  const RewardWeights w;
  EXPECT_DOUBLE_EQ(total_reward(1, 1, 1, 0, w, 0.5), 1.45);
  EXPECT_EQ(total_reward(0.7, 1, 1, 1, w, 0.0), 0.7);
  EXPECT_EQ(total_reward(0, 0, 0, 0, w, 0.9), 0.0);
}

TEST(TotalReward, LinearSlopes) {
  const RewardWeights w{0.6, 0.3, 0.3};
  const double a = 0.37, h = 0.25;
  const double base = total_reward(0.2, 0.4, 0, 0, w, a);
  EXPECT_NEAR((total_reward(0.2 + h, 0.4, 0, 0, w, a) - base) / h, 1.0, 1e-12);
  EXPECT_NEAR((total_reward(0.2, 0.4 + h, 0, 0, w, a) - base) / h, a * w.w_t, 1e-12);
  EXPECT_NEAR((total_reward(0.2, 0.4, 1, 0, w, a) - base), a * w.w_s, 1e-12);
  EXPECT_NEAR((total_reward(0.2, 0.4, 0, 1, w, a) - base), a * w.w_r, 1e-12);
}

TEST(Rubric, PerfectTrajectoryScoresOne) {
  const auto& w = default_world();
  OracleJudge judge(w);
  for (std::size_t h = 1; h <= kMaxHops; ++h) {
    for (const auto& q : all_questions(w, h)) {
      EXPECT_EQ(thinking_reward(judge, q, perfect_trajectory(w, q)), 1.0) << q.question_id;
    }
  }
}

TEST(Rubric, RepeatedQueryAndUngroundedEntityLoseTwoQuarters) {
  const auto& w = default_world();
  const auto q = question_for_chain(w, 0, 2);
  const auto& h1 = q.hop_chain[0];
  // a name that is in no retrieved text and not in the question
  std::string stranger;
  Trajectory t;
  for (int i = 0; i < 3; ++i) add_search(w, t, h1.relation + " of " + h1.subject);
  std::string seen;
  for (const auto& s : t.segments) seen += s.text + "\n";
  for (const auto& e : w.entities) {
    if (seen.find(e) == std::string::npos && q.text.find(e) == std::string::npos) {
      stranger = e;
      break;
    }
  }
  ASSERT_FALSE(stranger.empty());
  t.push(SegmentKind::Think, "Perhaps it is " + stranger + ".");
  t.push(SegmentKind::Answer, stranger);
  const auto c = thinking_rubric(w, q, t);
  EXPECT_FALSE(c.grounded_claims);
  EXPECT_TRUE(c.chain_order);
  EXPECT_FALSE(c.no_repeated_query);
  EXPECT_TRUE(c.concise_retrieval);
  OracleJudge judge(w);
  EXPECT_EQ(thinking_reward(judge, q, t), 0.5);
  EXPECT_EQ(thinking_reward(judge, q, t), thinking_reward(judge, q, t));
}

TEST(Rubric, OutOfOrderAndTooManySearches) {
  const auto& w = default_world();
  const auto q = question_for_chain(w, 1, 2);
  Trajectory t;
  // hop 2 evidence arrives before hop 1 evidence
  t.push(SegmentKind::Search, q.hop_chain[1].relation + " of " + q.hop_chain[1].subject);
  t.push(SegmentKind::Information, "[d0] " + fact_sentence(q.hop_chain[1]));
  t.push(SegmentKind::Search, q.hop_chain[0].relation + " of " + q.hop_chain[0].subject);
  t.push(SegmentKind::Information, "[d1] " + fact_sentence(q.hop_chain[0]));
  add_search(w, t, "mentor of " + w.entities[3]);
  add_search(w, t, "rival of " + w.entities[4]);
  t.push(SegmentKind::Answer, q.gold_answer);
  const auto c = thinking_rubric(w, q, t);
  EXPECT_FALSE(c.chain_order);
  EXPECT_FALSE(c.concise_retrieval);
  EXPECT_TRUE(c.no_repeated_query);
}

TEST(ScoreTrajectory, BreakdownInvariant) {
  const auto& w = default_world();
  OracleJudge judge(w);
  const RewardWeights weights;
  const auto q = question_for_chain(w, 3, 3);
  const auto t = perfect_trajectory(w, q);
  for (double a : {0.0, 0.25, 0.5, 0.999}) {
    const auto b = score_trajectory(judge, q, t, weights, a);
    EXPECT_EQ(b.answer, 1.0);
    EXPECT_EQ(b.sufficient, 1);
    EXPECT_EQ(b.thinking, 1.0);
    EXPECT_EQ(b.reflect, 0);
    EXPECT_EQ(b.anneal, a);
    EXPECT_DOUBLE_EQ(b.total, b.answer + a * (weights.w_t * b.thinking + weights.w_s * b.sufficient +
                                             weights.w_r * b.reflect));
  }
}

TEST(ScoreTrajectory, UnderthinkingIsInsufficient) {
  // stops after one hop of a two-hop question, before the evidence is complete
  const auto& w = default_world();
  OracleJudge judge(w);
  const auto q = question_for_chain(w, 0, 2);
  Trajectory t;
  add_search(w, t, q.hop_chain[0].relation + " of " + q.hop_chain[0].subject);
  t.push(SegmentKind::Answer, q.hop_chain[0].object);
  const auto b = score_trajectory(judge, q, t, {}, 1.0);
  EXPECT_EQ(b.sufficient, 0);
  EXPECT_EQ(b.answer, 0.0);
}

TEST(ScoreTrajectory, AnswerInTraceDoesNotMakeItSufficient) {
  // the judge sees the answer-stripped prefix
  const auto& w = default_world();
  OracleJudge judge(w);
  const auto q = question_for_chain(w, 0, 1);
  Trajectory t;
  t.push(SegmentKind::Answer, fact_sentence(q.hop_chain[0]));
  EXPECT_EQ(score_trajectory(judge, q, t, {}, 1.0).sufficient, 0);
}

TEST(ScoreTrajectory, PartialTraceScoresAnswerZero) {
  const auto& w = default_world();
  OracleJudge judge(w);
  const auto q = question_for_chain(w, 0, 1);
  auto t = perfect_trajectory(w, q);
  t.segments.pop_back();
  const auto b = score_trajectory(judge, q, t, {}, 1.0);
  EXPECT_EQ(b.answer, 0.0);
  EXPECT_EQ(b.sufficient, 1);
}

TEST(ScoreTrajectory, ReflectionFixtureEarnsPlusOne) {
  const auto& w = default_world();
  OracleJudge judge(w);
  const auto t = trajectory_from_jsonl_line(fixture("reflection.jsonl"));
  const auto q = question_by_id(w, t.question_id);
  const auto answers = intermediate_answers(t);
  ASSERT_EQ(answers.size(), 2u);
  EXPECT_NE(answers[0], answers[1]);
  EXPECT_EQ(score_trajectory(judge, q, t, {}, 1.0).reflect, 1);
}
