#pragma once
#ifndef TIRESRAG_TRAIN_HPP
#define TIRESRAG_TRAIN_HPP

// Training loop: per step, sample questions, roll out G trajectories each,
// score them, filter saturated groups, compute advantages and run mu clipped
// policy-gradient passes.

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tiresrag/advantage.hpp"
#include "tiresrag/config.hpp"
#include "tiresrag/policy.hpp"
#include "tiresrag/reward.hpp"
#include "tiresrag/rng.hpp"
#include "tiresrag/world.hpp"

namespace tiresrag {

struct StepStats {
  std::size_t step = 0;
  double answer_reward = 0.0;
  double thinking_reward = 0.0;
  double suff_rate = 0.0;
  double filter_rate = 0.0;
};

struct FinalEval {
  std::size_t rollouts = 0;
  double answer_reward = 0.0;
  double sufficiency_rate = 0.0;
  double thinking_reward = 0.0;
};

struct Checkpoint {
  std::size_t step = 0;
  TabularPolicy policy;
};

struct TrainingRun {
  Config config;
  std::string config_hash;
  std::vector<StepStats> curve;
  std::vector<Checkpoint> checkpoints;
  TabularPolicy policy;
  FinalEval final_eval;
};

struct StepRecord {
  std::size_t step = 0;
  double anneal = 0.0;
  std::vector<Question> questions;
  std::vector<std::vector<RolloutRecord>> rollouts;
  std::vector<GroupBatch> groups;
  std::vector<std::vector<AdvantageRecord>> advantages;
  StepStats stats;
};

struct TrainObserver {
  std::function<void(const StepRecord&)> on_step;
};

class TrainingCollapse : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline std::vector<Question> training_pool(const WorldSpec& w, const Config& c) {
  std::vector<Question> pool;
  for (auto h : c.hops) {
    for (auto& q : all_questions(w, h)) pool.push_back(std::move(q));
  }
  return pool;
}

// Seed streams; every random choice in a step derives from (seed, step, slot).
inline std::uint64_t question_pick_seed(const Config& c, std::size_t step, std::size_t slot) {
  return derive_seed(c.seed, step, slot, 1);
}
inline std::uint64_t rollout_seed(const Config& c, std::size_t step, std::size_t slot) {
  return derive_seed(c.seed, step, slot, 2);
}

// Indices into `active` chosen (with replacement) for this step.
inline std::vector<std::size_t> pick_questions(const Config& c, std::size_t step, const std::vector<std::size_t>& active) {
  std::vector<std::size_t> out;
  if (active.empty()) return out;
  for (std::size_t b = 0; b < c.batch_questions; ++b) {
    Rng rng(question_pick_seed(c, step, b));
    out.push_back(active[rng.index(active.size())]);
  }
  return out;
}

class Trainer {
public:
  Trainer(const Config& config, const WorldSpec& world, Judge& judge)
      : config_(config), world_(&world), judge_(&judge), policy_(config.temperature),
        pool_(training_pool(world, config)) {
    for (std::size_t i = 0; i < pool_.size(); ++i) active_.push_back(i);
  }

  const TabularPolicy& policy() const { return policy_; }
  void set_policy(TabularPolicy p) { policy_ = std::move(p); }
  std::size_t steps_done() const { return step_; }
  const std::vector<Question>& pool() const { return pool_; }

  StepRecord step() {
    StepRecord rec;
    rec.step = ++step_;
    rec.anneal = dynamic_weight(static_cast<double>(rec.step), static_cast<double>(config_.steps), config_.schedule);
    if (active_.empty()) throw TrainingCollapse("training pool is empty: every question was filtered out");

    const auto picks = pick_questions(config_, rec.step, active_);
    double answer_sum = 0, think_sum = 0, suff_sum = 0;
    std::size_t n_rollouts = 0;
    for (std::size_t b = 0; b < picks.size(); ++b) {
      const auto& q = pool_[picks[b]];
      rec.questions.push_back(q);
      auto rolls = rollout(policy_, *world_, q, config_.group_size, config_.rollout, rollout_seed(config_, rec.step, b));
      GroupBatch group{q.question_id, {}};
      for (auto& r : rolls) {
        const auto bd = score_trajectory(*judge_, q, r.trajectory, config_.weights, rec.anneal);
        group.rewards.push_back(bd);
        answer_sum += bd.answer;
        think_sum += bd.thinking;
        suff_sum += bd.sufficient;
        ++n_rollouts;
      }
      rec.rollouts.push_back(std::move(rolls));
      rec.groups.push_back(std::move(group));
    }
    rec.advantages = finalize_batch(rec.groups, config_.advantage);

    std::vector<UpdateItem> batch;
    std::size_t filtered = 0;
    for (std::size_t b = 0; b < rec.groups.size(); ++b) {
      if (!rec.advantages[b].empty() && rec.advantages[b].front().filtered) {
        ++filtered;
        if (config_.persistence == FilterPersistence::Remove) remove_from_pool(picks[b]);
        continue;
      }
      for (std::size_t i = 0; i < rec.rollouts[b].size(); ++i) {
        batch.push_back({&rec.rollouts[b][i].decisions, rec.advantages[b][i].final});
      }
    }

    const double n = static_cast<double>(n_rollouts);
    rec.stats = {rec.step, answer_sum / n, think_sum / n, suff_sum / n,
                 static_cast<double>(filtered) / static_cast<double>(rec.groups.size())};

    if (batch.empty()) {
      if (++collapsed_steps_ >= config_.collapse_patience) {
        throw TrainingCollapse("every group was filtered for " + std::to_string(collapsed_steps_) +
                               " consecutive steps (step " + std::to_string(rec.step) + ")");
      }
    } else {
      collapsed_steps_ = 0;
      policy_ = update(std::move(policy_), batch, config_.mu, config_.lr, config_.epsilon, config_.beta);
    }
    return rec;
  }

private:
  void remove_from_pool(std::size_t idx) {
    std::erase(active_, idx);
  }

  Config config_;
  const WorldSpec* world_;
  Judge* judge_;
  TabularPolicy policy_;
  std::vector<Question> pool_;
  std::vector<std::size_t> active_;
  std::size_t step_ = 0;
  std::size_t collapsed_steps_ = 0;
};

// Mean oracle-judged rewards of `samples` fresh rollouts per question.
inline FinalEval evaluate_policy(const TabularPolicy& policy, const WorldSpec& world,
                                 const std::vector<Question>& questions, const RolloutParams& params,
                                 std::size_t samples, std::uint64_t seed) {
  OracleJudge judge(world);
  FinalEval ev;
  double answer = 0, suff = 0, think = 0;
  for (std::size_t qi = 0; qi < questions.size(); ++qi) {
    for (std::size_t s = 0; s < samples; ++s) {
      const auto rec = rollout_one(policy, world, questions[qi], params, derive_seed(seed, qi, s, 3));
      const auto bd = score_trajectory(judge, questions[qi], rec.trajectory, RewardWeights{}, 0.0);
      answer += bd.answer;
      suff += bd.sufficient;
      think += bd.thinking;
      ++ev.rollouts;
    }
  }
  if (ev.rollouts) {
    const double n = static_cast<double>(ev.rollouts);
    ev.answer_reward = answer / n;
    ev.sufficiency_rate = suff / n;
    ev.thinking_reward = think / n;
  }
  return ev;
}

inline TrainingRun train(const Config& config, const WorldSpec& world, Judge& judge, const TrainObserver& observer = {}) {
  TrainingRun run;
  run.config = config;
  run.config_hash = config_hash(config);
  Trainer trainer(config, world, judge);
  for (std::size_t t = 1; t <= config.steps; ++t) {
    const auto rec = trainer.step();
    run.curve.push_back(rec.stats);
    if (observer.on_step) observer.on_step(rec);
    if (config.checkpoint_every > 0 && t % config.checkpoint_every == 0 && t != config.steps) {
      run.checkpoints.push_back({t, trainer.policy()});
    }
  }
  run.policy = trainer.policy();
  run.checkpoints.push_back({config.steps, run.policy});
  run.final_eval = evaluate_policy(run.policy, world, trainer.pool(), config.rollout, config.eval_samples,
                                   derive_seed(config.seed, 0xe7a1));
  return run;
}

inline std::string curve_csv_header() { return "step,answer_reward,thinking_reward,suff_rate,filter_rate\n"; }

inline std::string curve_csv_row(const StepStats& s) {
  return std::to_string(s.step) + "," + text::format_double(s.answer_reward) + "," +
         text::format_double(s.thinking_reward) + "," + text::format_double(s.suff_rate) + "," +
         text::format_double(s.filter_rate) + "\n";
}

inline nlohmann::json checkpoint_json(const Checkpoint& ck, const Config& config) {
  return {{"format", "tiresrag-checkpoint"},
          {"version", 1},
          {"step", ck.step},
          {"config_hash", config_hash(config)},
          {"config", to_json(config)},
          {"policy", policy_to_json(ck.policy)}};
}

}  // namespace tiresrag

#endif  // TIRESRAG_TRAIN_HPP
