#pragma once
#ifndef TIRESRAG_ADVANTAGE_HPP
#define TIRESRAG_ADVANTAGE_HPP

// Per-rollout advantages for a group of G rollouts of one question:
//   A'_i = (A_i - A^P_i) * W(mean sufficiency of the group)
// with A_i the normalized total reward, A^P_i the consistency penalty and W the
// difficulty weight. Saturated groups are filtered out beforehand.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tiresrag/reward.hpp"
#include "tiresrag/text.hpp"

namespace tiresrag {

struct DifficultyParams {
  double A = 0.4;
  double B = 1.5;
  double rho0 = 0.75;
  double k = 10.0;
};

enum class PenaltyForm {
  Verbatim,  // -lambda * A_T * A_T * A_A
  Sta,       // -lambda * A_S * A_T * A_A
};

enum class NormalizationMode { Group, Batch };

enum class FilterMode { Prose, Alg1, Off };

inline std::string_view to_string(PenaltyForm p) { return p == PenaltyForm::Verbatim ? "verbatim" : "sta"; }
inline std::string_view to_string(NormalizationMode m) { return m == NormalizationMode::Group ? "group" : "batch"; }
inline std::string_view to_string(FilterMode m) {
  switch (m) {
    case FilterMode::Prose: return "prose";
    case FilterMode::Alg1: return "alg1";
    case FilterMode::Off: return "off";
  }
  return "prose";
}

namespace detail {

// Mean and population std over a sorted copy, so the result is independent of
// element order bit for bit.
struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
  bool constant = true;
};

inline Moments moments(std::span<const double> values) {
  Moments m;
  if (values.empty()) return m;
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  m.constant = v.front() == v.back();
  if (m.constant) {
    m.mean = v.front();
    return m;
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  std::vector<double> sq;
  sq.reserve(v.size());
  for (double x : v) sq.push_back((x - m.mean) * (x - m.mean));
  std::sort(sq.begin(), sq.end());
  double ss = 0.0;
  for (double x : sq) ss += x;
  m.stddev = std::sqrt(ss / static_cast<double>(v.size()));
  if (m.stddev == 0.0) m.constant = true;
  return m;
}

}  // namespace detail

// z-scores with population std; a constant input maps to all zeros.
inline std::vector<double> normalize_group(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("normalize_group: need at least two values");
  const auto m = detail::moments(values);
  std::vector<double> out(values.size(), 0.0);
  if (m.constant) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - m.mean) / m.stddev;
  return out;
}

// Whole-batch baseline: one mean and std over every value, group boundaries ignored.
inline std::vector<std::vector<double>> normalize_batch(const std::vector<std::vector<double>>& groups) {
  std::vector<double> flat;
  for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());
  if (flat.size() < 2) throw std::invalid_argument("normalize_batch: need at least two values");
  const auto m = detail::moments(flat);
  std::vector<std::vector<double>> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<double> row(g.size(), 0.0);
    if (!m.constant) {
      for (std::size_t i = 0; i < g.size(); ++i) row[i] = (g[i] - m.mean) / m.stddev;
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline double difficulty_weight(double suff_avg, const DifficultyParams& p = {}) {
  return p.A + (p.B - p.A) / (1.0 + std::exp(p.k * (suff_avg - p.rho0)));
}

inline double consistency_penalty(double a_s, double a_t, double a_a, double lambda_p,
                                  PenaltyForm form = PenaltyForm::Verbatim) {
  if (!(a_s * a_t * a_a < 0.0)) return 0.0;
  return form == PenaltyForm::Verbatim ? -lambda_p * a_t * a_t * a_a : -lambda_p * a_s * a_t * a_a;
}

// Returns true to keep the group.
//   Prose: drop iff every reward >= high or every reward <= low.
//   Alg1:  keep iff every reward lies strictly inside (low, high).
inline bool filter_group(std::span<const double> answer_rewards, double low = 0.1, double high = 0.9,
                         FilterMode mode = FilterMode::Prose) {
  if (!(low < high)) throw std::invalid_argument("filter_group: need low < high");
  switch (mode) {
    case FilterMode::Off: return true;
    case FilterMode::Alg1:
      return std::all_of(answer_rewards.begin(), answer_rewards.end(),
                         [&](double r) { return low < r && r < high; });
    case FilterMode::Prose: {
      const bool all_high = std::all_of(answer_rewards.begin(), answer_rewards.end(), [&](double r) { return r >= high; });
      const bool all_low = std::all_of(answer_rewards.begin(), answer_rewards.end(), [&](double r) { return r <= low; });
      return !(all_high || all_low);
    }
  }
  return true;
}

struct GroupBatch {
  std::string question_id;
  std::vector<RewardBreakdown> rewards;

  std::vector<double> totals() const { return project([](const RewardBreakdown& b) { return b.total; }); }
  std::vector<double> answer_rewards() const { return project([](const RewardBreakdown& b) { return b.answer; }); }
  std::vector<double> sufficient_rewards() const {
    return project([](const RewardBreakdown& b) { return static_cast<double>(b.sufficient); });
  }
  std::vector<double> thinking_rewards() const {
    return project([](const RewardBreakdown& b) { return b.thinking; });
  }

  double sufficient_avg() const {
    if (rewards.empty()) return 0.0;
    int n = 0;
    for (const auto& b : rewards) n += b.sufficient;
    return static_cast<double>(n) / static_cast<double>(rewards.size());
  }

private:
  template <typename F>
  std::vector<double> project(F f) const {
    std::vector<double> out;
    out.reserve(rewards.size());
    for (const auto& b : rewards) out.push_back(f(b));
    return out;
  }
};

struct AdvantageParams {
  DifficultyParams difficulty;
  double lambda_p = 0.1;
  PenaltyForm penalty = PenaltyForm::Verbatim;
  NormalizationMode normalization = NormalizationMode::Group;
  FilterMode filter = FilterMode::Prose;
  double filter_low = 0.1;
  double filter_high = 0.9;
};

struct AdvantageRecord {
  double r_sum = 0.0;
  double raw_advantage = 0.0;
  double suff_adv = 0.0;
  double think_adv = 0.0;
  double answer_adv = 0.0;
  double penalty = 0.0;
  double weight = 1.0;
  double final = 0.0;
  bool filtered = false;
};

namespace detail {

inline void apply_raw(std::vector<AdvantageRecord>& recs, const std::vector<double>& raw) {
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].raw_advantage = raw[i];
    recs[i].final = (recs[i].raw_advantage - recs[i].penalty) * recs[i].weight;
  }
}

}  // namespace detail

// Group-normalized records for one group (no filtering).
inline std::vector<AdvantageRecord> finalize(const GroupBatch& group, const AdvantageParams& p) {
  const auto totals = group.totals();
  const auto raw = normalize_group(totals);
  const auto a_s = normalize_group(group.sufficient_rewards());
  const auto a_t = normalize_group(group.thinking_rewards());
  const auto a_a = normalize_group(group.answer_rewards());
  const double w = difficulty_weight(group.sufficient_avg(), p.difficulty);
  std::vector<AdvantageRecord> recs(totals.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto& r = recs[i];
    r.r_sum = totals[i];
    r.suff_adv = a_s[i];
    r.think_adv = a_t[i];
    r.answer_adv = a_a[i];
    r.penalty = consistency_penalty(a_s[i], a_t[i], a_a[i], p.lambda_p, p.penalty);
    r.weight = w;
  }
  detail::apply_raw(recs, raw);
  return recs;
}

// Filters, then finalizes every group. In batch mode the total-reward
// advantage A_i is re-normalized over all kept rollouts; component advantages
// stay group-normalized. Filtered groups get records with final = 0.
inline std::vector<std::vector<AdvantageRecord>> finalize_batch(const std::vector<GroupBatch>& groups,
                                                                const AdvantageParams& p) {
  std::vector<std::vector<AdvantageRecord>> out;
  std::vector<bool> keep;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    out.push_back(finalize(g, p));
    keep.push_back(filter_group(g.answer_rewards(), p.filter_low, p.filter_high, p.filter));
  }
  if (p.normalization == NormalizationMode::Batch) {
    std::vector<std::vector<double>> kept_totals;
    std::size_t kept_count = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      if (!keep[i]) continue;
      kept_totals.push_back(groups[i].totals());
      kept_count += kept_totals.back().size();
    }
    if (kept_count >= 2) {
      const auto raw = normalize_batch(kept_totals);
      std::size_t k = 0;
      for (std::size_t i = 0; i < groups.size(); ++i) {
        if (keep[i]) detail::apply_raw(out[i], raw[k++]);
      }
    }
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (keep[i]) continue;
    for (auto& r : out[i]) {
      r.filtered = true;
      r.final = 0.0;
    }
  }
  return out;
}

inline std::string audit_csv_header() {
  return "step,question_id,rollout_index,r_sum,A_i,A_S,A_T,A_A,penalty,W,A_final,filtered\n";
}

inline std::string audit_csv_rows(std::size_t step, const std::string& question_id,
                                  const std::vector<AdvantageRecord>& recs) {
  std::string out;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    out += std::to_string(step) + "," + text::csv_field(question_id) + "," + std::to_string(i) + "," +
           text::format_double(r.r_sum) + "," + text::format_double(r.raw_advantage) + "," +
           text::format_double(r.suff_adv) + "," + text::format_double(r.think_adv) + "," +
           text::format_double(r.answer_adv) + "," + text::format_double(r.penalty) + "," +
           text::format_double(r.weight) + "," + text::format_double(r.final) + "," + (r.filtered ? "1" : "0") +
           "\n";
  }
  return out;
}

}  // namespace tiresrag

#endif  // TIRESRAG_ADVANTAGE_HPP
