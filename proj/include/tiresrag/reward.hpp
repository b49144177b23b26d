#pragma once
#ifndef TIRESRAG_REWARD_HPP
#define TIRESRAG_REWARD_HPP

// Trajectory rewards: answer F1, evidence sufficiency, reasoning quality,
// reflection, and their annealed combination
//   total = answer + a_t * (w_t * thinking + w_s * sufficient + w_r * reflect).

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiresrag/metrics.hpp"
#include "tiresrag/text.hpp"
#include "tiresrag/trace.hpp"
#include "tiresrag/world.hpp"

namespace tiresrag {

struct RewardWeights {
  double w_t = 0.6;
  double w_s = 0.3;
  double w_r = 0.3;
};

struct RewardBreakdown {
  double answer = 0.0;
  int sufficient = 0;
  double thinking = 0.0;
  int reflect = 0;
  double anneal = 0.0;
  double total = 0.0;
};

enum class ScheduleMode {
  Main,  // 1 / (1 + exp((t - 0.9 T) / 10))
  Alg1,  // 1 / (1 + exp((T - 0.9 t) / 10)), kept for comparison only
};

inline std::string_view to_string(ScheduleMode m) { return m == ScheduleMode::Main ? "main" : "alg1"; }

inline double dynamic_weight(double t, double total_steps, ScheduleMode mode = ScheduleMode::Main) {
  if (!(total_steps > 0)) throw std::invalid_argument("dynamic_weight: total steps must be positive");
  const double z = mode == ScheduleMode::Main ? (t - 0.9 * total_steps) / 10.0 : (total_steps - 0.9 * t) / 10.0;
  return 1.0 / (1.0 + std::exp(z));
}

inline double total_reward(double answer, double thinking, double sufficient, double reflect,
                           const RewardWeights& w, double a_t) {
  return answer + a_t * (w.w_t * thinking + w.w_s * sufficient + w.w_r * reflect);
}

inline double answer_reward(std::string_view pred, std::string_view gold) { return token_f1(pred, gold); }

// First and last answers only; anything else scores 0.
inline int reflect_reward(const std::vector<std::string>& answers, std::string_view gold) {
  if (answers.size() < 2) return 0;
  const int first = cem(answers.front(), gold);
  const int last = cem(answers.back(), gold);
  if (first == 0 && last == 1) return 1;
  if (first == 1 && last == 0) return -1;
  return 0;
}

// ---- reasoning-quality rubric ------------------------------------------------

struct RubricWeights {
  double grounded_claims = 0.25;
  double chain_order = 0.25;
  double no_repeated_query = 0.25;
  double concise_retrieval = 0.25;
};

struct RubricClauses {
  bool grounded_claims = false;
  bool chain_order = false;
  bool no_repeated_query = false;
  bool concise_retrieval = false;

  double score(const RubricWeights& w) const {
    return w.grounded_claims * grounded_claims + w.chain_order * chain_order +
           w.no_repeated_query * no_repeated_query + w.concise_retrieval * concise_retrieval;
  }
};

namespace detail {

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         static_cast<unsigned char>(c) >= 0x80;
}

inline bool contains_word_phrase(std::string_view hay, std::string_view phrase) {
  for (auto pos = hay.find(phrase); pos != std::string_view::npos; pos = hay.find(phrase, pos + 1)) {
    const bool left = pos == 0 || !is_word_char(hay[pos - 1]);
    const std::size_t end = pos + phrase.size();
    const bool right = end >= hay.size() || !is_word_char(hay[end]);
    if (left && right) return true;
  }
  return false;
}

}  // namespace detail

// Clauses:
//  grounded_claims   every entity named in a think segment was named earlier by
//                    an information segment or by the question;
//  chain_order       the hops whose facts have been retrieved form a prefix of
//                    the chain and were first retrieved in hop order;
//  no_repeated_query no search query text occurs twice;
//  concise_retrieval retrieval count <= hops + 1.
inline RubricClauses thinking_rubric(const WorldSpec& w, const Question& q, const Trajectory& t) {
  RubricClauses c;

  c.grounded_claims = true;
  std::string seen = q.text;
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Information) {
      seen += "\n" + s.text;
    } else if (s.kind == SegmentKind::Think) {
      for (const auto& e : w.entities) {
        if (detail::contains_word_phrase(s.text, e) && !detail::contains_word_phrase(seen, e)) {
          c.grounded_claims = false;
        }
      }
    }
  }

  std::vector<std::size_t> first_seen(q.hop_chain.size(), 0);  // 0 = never
  std::size_t info_ordinal = 0;
  for (const auto& s : t.segments) {
    if (s.kind != SegmentKind::Information) continue;
    ++info_ordinal;
    for (std::size_t h = 0; h < q.hop_chain.size(); ++h) {
      if (first_seen[h] == 0 && s.text.find(fact_sentence(q.hop_chain[h])) != std::string::npos) {
        first_seen[h] = info_ordinal;
      }
    }
  }
  c.chain_order = true;
  for (std::size_t h = 1; h < first_seen.size(); ++h) {
    if (first_seen[h] != 0 && (first_seen[h - 1] == 0 || first_seen[h - 1] > first_seen[h])) {
      c.chain_order = false;
    }
  }

  std::set<std::string> queries;
  c.no_repeated_query = true;
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Search && !queries.insert(std::string(text::trim(s.text))).second) {
      c.no_repeated_query = false;
    }
  }

  c.concise_retrieval = t.retrieval_count() <= q.hops + 1;
  return c;
}

// ---- judges --------------------------------------------------------------------

class JudgeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Judge {
public:
  virtual ~Judge() = default;
  // rd is the answer-stripped reasoning and evidence prefix.
  virtual int sufficient(const Question& q, const Trajectory& rd, const std::string& gold) = 0;
  virtual double thinking(const Question& q, const Trajectory& t) = 0;
};

class OracleJudge final : public Judge {
public:
  explicit OracleJudge(const WorldSpec& world, RubricWeights rubric = {}) : world_(&world), rubric_(rubric) {}

  int sufficient(const Question& q, const Trajectory& rd, const std::string&) override {
    return oracle_sufficient(*world_, q, rd);
  }

  double thinking(const Question& q, const Trajectory& t) override {
    return thinking_rubric(*world_, q, t).score(rubric_);
  }

private:
  const WorldSpec* world_;
  RubricWeights rubric_;
};

inline int sufficient_reward(Judge& judge, const Question& q, const Trajectory& rd, const std::string& gold) {
  return judge.sufficient(q, rd, gold);
}

inline double thinking_reward(Judge& judge, const Question& q, const Trajectory& t) {
  return judge.thinking(q, t);
}

// Scores one trajectory. A trace without any answer is incomplete: its
// answer component is 0.
inline RewardBreakdown score_trajectory(Judge& judge, const Question& q, const Trajectory& t,
                                        const RewardWeights& w, double a_t) {
  RewardBreakdown b;
  const auto answers = intermediate_answers(t);
  b.answer = answers.empty() ? 0.0 : answer_reward(answers.back(), q.gold_answer);
  b.sufficient = sufficient_reward(judge, q, strip_answers(t), q.gold_answer);
  b.thinking = thinking_reward(judge, q, t);
  b.reflect = reflect_reward(answers, q.gold_answer);
  b.anneal = a_t;
  b.total = total_reward(b.answer, b.thinking, b.sufficient, b.reflect, w, a_t);
  return b;
}

inline nlohmann::json to_json(const RewardBreakdown& b) {
  return {{"answer", b.answer},     {"sufficient", b.sufficient}, {"thinking", b.thinking},
          {"reflect", b.reflect},   {"anneal", b.anneal},         {"total", b.total}};
}

}  // namespace tiresrag

#endif  // TIRESRAG_REWARD_HPP
