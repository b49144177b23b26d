#pragma once
#ifndef TIRESRAG_METRICS_HPP
#define TIRESRAG_METRICS_HPP

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiresrag/text.hpp"
#include "tiresrag/trace.hpp"
#include "tiresrag/world.hpp"

namespace tiresrag {

// All three answer metrics score 0 when either side normalizes to nothing.

inline int em(std::string_view pred, std::string_view gold) {
  const auto p = text::normalize_answer(pred);
  const auto g = text::normalize_answer(gold);
  return (!p.empty() && !g.empty() && p == g) ? 1 : 0;
}

inline int cem(std::string_view pred, std::string_view gold) {
  const auto p = text::normalize_answer(pred);
  const auto g = text::normalize_answer(gold);
  return (!p.empty() && !g.empty() && p.find(g) != std::string::npos) ? 1 : 0;
}

inline double token_f1(std::string_view pred, std::string_view gold) {
  const auto p = text::answer_tokens(pred);
  const auto g = text::answer_tokens(gold);
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

enum class ThinkingCategory { Overthinking, GoodThinking, Underthinking };

inline std::string_view to_string(ThinkingCategory c) {
  switch (c) {
    case ThinkingCategory::Overthinking: return "overthinking";
    case ThinkingCategory::GoodThinking: return "good_thinking";
    case ThinkingCategory::Underthinking: return "underthinking";
  }
  return "underthinking";
}

inline ThinkingCategory classify_thinking(const WorldSpec& w, const Question& q, const Trajectory& t) {
  const auto point = sufficiency_point(w, q, t);
  if (!point) return ThinkingCategory::Underthinking;
  return *point == t.retrieval_count() ? ThinkingCategory::GoodThinking : ThinkingCategory::Overthinking;
}

struct MetricsRow {
  std::string question_id;
  std::string prediction;
  std::string gold;
  int em = 0;
  double f1 = 0.0;
  int cem = 0;
  ThinkingCategory category = ThinkingCategory::Underthinking;
  std::size_t search_steps = 0;
  std::size_t thinking_length = 0;  // characters across think segments
};

struct MetricsReport {
  std::size_t n = 0;
  double em = 0.0;
  double f1 = 0.0;
  double cem = 0.0;
  double mean_search_steps = 0.0;
  double mean_thinking_length = 0.0;
  std::size_t skipped = 0;
  std::vector<MetricsRow> per_question;
};

struct ThinkingCategoryCounts {
  std::size_t over_correct = 0, over_incorrect = 0;
  std::size_t good_correct = 0, good_incorrect = 0;
  std::size_t under_correct = 0, under_incorrect = 0;

  std::size_t total() const {
    return over_correct + over_incorrect + good_correct + good_incorrect + under_correct + under_incorrect;
  }
  std::size_t incorrect() const { return over_incorrect + good_incorrect + under_incorrect; }

  void add(ThinkingCategory c, bool correct) {
    switch (c) {
      case ThinkingCategory::Overthinking: ++(correct ? over_correct : over_incorrect); break;
      case ThinkingCategory::GoodThinking: ++(correct ? good_correct : good_incorrect); break;
      case ThinkingCategory::Underthinking: ++(correct ? under_correct : under_incorrect); break;
    }
  }

  friend bool operator==(const ThinkingCategoryCounts&, const ThinkingCategoryCounts&) = default;
};

struct EvalItem {
  Trajectory trajectory;
  Question question;
};

struct EvalResult {
  MetricsReport report;
  ThinkingCategoryCounts categories;
  std::vector<std::string> skipped_ids;
};

inline MetricsRow score_row(const WorldSpec& w, const Question& q, const Trajectory& t) {
  MetricsRow row;
  row.question_id = q.question_id;
  row.prediction = final_answer(t);
  row.gold = q.gold_answer;
  row.em = em(row.prediction, row.gold);
  row.f1 = token_f1(row.prediction, row.gold);
  row.cem = cem(row.prediction, row.gold);
  row.category = classify_thinking(w, q, t);
  row.search_steps = t.count(SegmentKind::Search);
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Think) row.thinking_length += s.text.size();
  }
  return row;
}

// Aggregates are computed over rows sorted on every reported field so
// the result does not depend on input order. Correctness for the category
// table is CEM.
inline EvalResult evaluate(const WorldSpec& w, const std::vector<EvalItem>& items) {
  EvalResult out;
  for (const auto& item : items) {
    bool valid = has_answer(item.trajectory);
    if (valid) {
      for (const auto& d : validate_trajectory(item.trajectory)) {
        if (!is_warning(d.code)) valid = false;
      }
    }
    if (!valid) {
      ++out.report.skipped;
      out.skipped_ids.push_back(item.trajectory.question_id);
      continue;
    }
    out.report.per_question.push_back(score_row(w, item.question, item.trajectory));
  }
  auto& rows = out.report.per_question;
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    if (a.question_id != b.question_id) return a.question_id < b.question_id;
    if (a.prediction != b.prediction) return a.prediction < b.prediction;
    return std::tie(a.thinking_length, a.search_steps, a.category) <
           std::tie(b.thinking_length, b.search_steps, b.category);
  });
  std::sort(out.skipped_ids.begin(), out.skipped_ids.end());
  out.report.n = rows.size();
  if (rows.empty()) return out;
  double em_sum = 0, f1_sum = 0, cem_sum = 0, search_sum = 0, think_sum = 0;
  for (const auto& r : rows) {
    em_sum += r.em;
    f1_sum += r.f1;
    cem_sum += r.cem;
    search_sum += static_cast<double>(r.search_steps);
    think_sum += static_cast<double>(r.thinking_length);
    out.categories.add(r.category, r.cem == 1);
  }
  const double n = static_cast<double>(rows.size());
  out.report.em = em_sum / n;
  out.report.f1 = f1_sum / n;
  out.report.cem = cem_sum / n;
  out.report.mean_search_steps = search_sum / n;
  out.report.mean_thinking_length = think_sum / n;
  return out;
}

inline std::string metrics_csv(const MetricsReport& r) {
  std::string out = "question_id,prediction,gold,em,f1,cem,category,search_steps,thinking_length\n";
  for (const auto& row : r.per_question) {
    out += text::csv_field(row.question_id) + "," + text::csv_field(row.prediction) + "," +
           text::csv_field(row.gold) + "," + std::to_string(row.em) + "," + text::format_double(row.f1) + "," +
           std::to_string(row.cem) + "," + std::string(to_string(row.category)) + "," +
           std::to_string(row.search_steps) + "," + std::to_string(row.thinking_length) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const ThinkingCategoryCounts& c) {
  return {{"overthinking", {{"correct", c.over_correct}, {"incorrect", c.over_incorrect}}},
          {"good_thinking", {{"correct", c.good_correct}, {"incorrect", c.good_incorrect}}},
          {"underthinking", {{"correct", c.under_correct}, {"incorrect", c.under_incorrect}}}};
}

inline nlohmann::json summary_json(const EvalResult& e) {
  return {{"n", e.report.n},
          {"em", e.report.em},
          {"f1", e.report.f1},
          {"cem", e.report.cem},
          {"mean_search_steps", e.report.mean_search_steps},
          {"mean_thinking_length", e.report.mean_thinking_length},
          {"skipped", e.report.skipped},
          {"categories", to_json(e.categories)}};
}

// Category x correctness table, one row per category.
inline std::string category_table(const ThinkingCategoryCounts& c) {
  auto line = [](std::string_view name, std::size_t corr, std::size_t incorr) {
    std::string n(name);
    n.resize(16, ' ');
    std::string a = std::to_string(corr), b = std::to_string(incorr);
    return n + std::string(8 - std::min<std::size_t>(8, a.size()), ' ') + a +
           std::string(10 - std::min<std::size_t>(10, b.size()), ' ') + b + "\n";
  };
  std::string out = "Category           Corr.   Incorr.\n";
  out += line("Overthinking", c.over_correct, c.over_incorrect);
  out += line("Good thinking", c.good_correct, c.good_incorrect);
  out += line("Underthinking", c.under_correct, c.under_incorrect);
  return out;
}

}  // namespace tiresrag

#endif  // TIRESRAG_METRICS_HPP
