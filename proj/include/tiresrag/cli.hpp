#pragma once
#ifndef TIRESRAG_CLI_HPP
#define TIRESRAG_CLI_HPP

// Subcommands behind the `tiresrag` executable. Everything returns a process
// exit code; progress goes to `log`, command output to `out`.
//
// exit codes: 0 ok, 1 bad input records, 2 usage/config error,
//             3 training collapse, 4 judge failure, 5 numeric failure

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tiresrag/config.hpp"
#include "tiresrag/judge_client.hpp"
#include "tiresrag/metrics.hpp"
#include "tiresrag/train.hpp"

namespace tiresrag::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kBadRecords = 1, kUsage = 2, kCollapse = 3, kJudge = 4, kNumeric = 5 };

inline void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << body;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string hash_comment(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

inline WorldSpec load_world(const fs::path& p) {
  const auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw WorldError("world file " + p.string() + " is not valid JSON");
  return world_from_json(j);
}

struct RecordError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

inline std::string format_errors(const std::vector<RecordError>& errs) {
  std::string out;
  for (const auto& e : errs) out += "line " + std::to_string(e.line) + ": " + e.message + "\n";
  return out;
}

inline std::vector<Question> load_questions(const fs::path& p, std::vector<RecordError>& errors) {
  std::vector<Question> qs;
  const auto lines = split_lines(read_file(p));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      qs.push_back(question_from_json(j));
    } catch (const std::exception& e) {
      errors.push_back({i + 1, e.what()});
    }
  }
  return qs;
}

inline std::string questions_jsonl(const std::vector<Question>& qs) {
  std::string out;
  for (const auto& q : qs) out += to_json(q).dump() + "\n";
  return out;
}

// ---- gen-world ---------------------------------------------------------------

inline int run_gen_world(const Config& c, const std::vector<std::size_t>& hops, const fs::path& dir,
                         std::ostream& log) {
  fs::create_directories(dir);
  const auto world = generate_world(c.world.seed, c.world.n_entities, c.world.n_chains, c.world.distractors);
  std::vector<Question> qs;
  for (auto h : hops) {
    for (auto& q : all_questions(world, h)) qs.push_back(std::move(q));
  }
  write_file(dir / "world.json", serialize_world(world));
  write_file(dir / "questions.jsonl", questions_jsonl(qs));
  write_file(dir / "manifest.json",
             nlohmann::json({{"config_hash", config_hash(c)}, {"config", to_json(c)}, {"hops", hops}}).dump(2) +
                 "\n");
  log << "wrote " << world.documents.size() << " documents and " << qs.size() << " questions to " << dir.string()
      << "\n";
  return kOk;
}

// ---- train -------------------------------------------------------------------

inline bool logs_trajectories(const Config& c, std::size_t step) {
  if (step == c.steps) return true;
  return c.trajectory_every > 0 && step % c.trajectory_every == 0;
}

inline int run_train(const Config& c, std::ostream& log) {
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  const auto hash = config_hash(c);
  const auto world = generate_world(c.world.seed, c.world.n_entities, c.world.n_chains, c.world.distractors);
  write_file(dir / "config.json", nlohmann::json({{"config_hash", hash}, {"config", to_json(c)}}).dump(2) + "\n");
  write_file(dir / "world.json", serialize_world(world));

  std::string curves = hash_comment(hash) + curve_csv_header();
  std::string audit = hash_comment(hash) + audit_csv_header();
  std::ofstream traj(dir / "trajectories.jsonl", std::ios::binary | std::ios::trunc);
  const std::size_t progress_every = std::max<std::size_t>(1, c.steps / 10);

  TrainObserver obs;
  obs.on_step = [&](const StepRecord& rec) {
    curves += curve_csv_row(rec.stats);
    for (std::size_t b = 0; b < rec.groups.size(); ++b) {
      audit += audit_csv_rows(rec.step, rec.groups[b].question_id, rec.advantages[b]);
    }
    if (logs_trajectories(c, rec.step)) {
      for (std::size_t b = 0; b < rec.rollouts.size(); ++b) {
        for (std::size_t i = 0; i < rec.rollouts[b].size(); ++i) {
          Trajectory t = rec.rollouts[b][i].trajectory;
          t.meta = {{"config_hash", hash},
                    {"step", rec.step},
                    {"group", b},
                    {"rollout_index", i},
                    {"reward", to_json(rec.groups[b].rewards[i])},
                    {"advantage", rec.advantages[b][i].final},
                    {"filtered", rec.advantages[b][i].filtered}};
          traj << to_jsonl_line(t) << "\n";
        }
      }
    }
    if (rec.step % progress_every == 0 || rec.step == c.steps) {
      log << "step " << rec.step << "/" << c.steps << "  answer=" << text::format_double(rec.stats.answer_reward)
          << "  suff=" << text::format_double(rec.stats.suff_rate)
          << "  filtered=" << text::format_double(rec.stats.filter_rate) << "\n";
    }
  };

  auto flush_curves = [&] {
    write_file(dir / "curves.csv", curves);
    write_file(dir / "audit.csv", audit);
  };

  TrainingRun run;
  try {
    auto judge = make_judge(c.judge, world);
    run = train(c, world, *judge, obs);
  } catch (const TrainingCollapse& e) {
    flush_curves();
    log << "error: training collapsed: " << e.what() << "\n";
    return kCollapse;
  } catch (const JudgeError& e) {
    flush_curves();
    log << "error: judge failure: " << e.what() << "\n";
    return kJudge;
  } catch (const UpdateError& e) {
    flush_curves();
    log << "error: " << e.what() << "\n";
    return kNumeric;
  }
  flush_curves();
  for (const auto& ck : run.checkpoints) {
    const auto body = checkpoint_json(ck, c).dump(2) + "\n";
    write_file(dir / ("checkpoint_step" + std::to_string(ck.step) + ".json"), body);
    if (ck.step == c.steps) write_file(dir / "checkpoint.json", body);
  }
  const auto& ev = run.final_eval;
  write_file(dir / "final_eval.json", nlohmann::json({{"config_hash", hash},
                                                      {"rollouts", ev.rollouts},
                                                      {"answer_reward", ev.answer_reward},
                                                      {"sufficiency_rate", ev.sufficiency_rate},
                                                      {"thinking_reward", ev.thinking_reward}})
                                              .dump(2) +
                                          "\n");
  log << "final policy: answer=" << text::format_double(ev.answer_reward)
      << " sufficiency=" << text::format_double(ev.sufficiency_rate) << " -> " << dir.string() << "\n";
  return kOk;
}

// ---- shared report writer for eval / score-trace ---------------------------------

struct ScoredTrace {
  Trajectory trajectory;
  Question question;
  RewardBreakdown reward;
};

inline void write_report(const fs::path& dir, const std::string& hash, const WorldSpec& world,
                         const std::vector<ScoredTrace>& scored, const std::vector<RecordError>& errors) {
  fs::create_directories(dir);
  std::vector<EvalItem> items;
  std::string traj, rewards;
  for (const auto& s : scored) {
    items.push_back({s.trajectory, s.question});
    Trajectory t = s.trajectory;
    t.meta["config_hash"] = hash;
    t.meta["reward"] = to_json(s.reward);
    traj += to_jsonl_line(t) + "\n";
    rewards += nlohmann::json({{"question_id", s.question.question_id},
                               {"config_hash", hash},
                               {"reward", to_json(s.reward)}})
                   .dump() +
               "\n";
  }
  const auto result = evaluate(world, items);
  auto summary = summary_json(result);
  summary["config_hash"] = hash;
  summary["skipped_ids"] = result.skipped_ids;
  nlohmann::json errs = nlohmann::json::array();
  for (const auto& e : errors) errs.push_back({{"line", e.line}, {"message", e.message}});
  summary["errors"] = errs;
  write_file(dir / "metrics.csv", hash_comment(hash) + metrics_csv(result.report));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  write_file(dir / "categories.txt", hash_comment(hash) + category_table(result.categories));
  write_file(dir / "trajectories.jsonl", traj);
  write_file(dir / "rewards.jsonl", rewards);
  write_file(dir / "errors.txt", format_errors(errors));
}

// ---- eval --------------------------------------------------------------------

struct EvalOptions {
  fs::path checkpoint;
  fs::path questions;
  fs::path out;
  std::optional<fs::path> world;
  std::uint64_t seed = 0;
  double anneal = 1.0;
};

inline int run_eval(const EvalOptions& o, std::ostream& log) {
  const auto ck = nlohmann::json::parse(read_file(o.checkpoint), nullptr, false);
  if (ck.is_discarded() || !ck.is_object() || ck.value("format", "") != "tiresrag-checkpoint") {
    log << "error: " << o.checkpoint.string() << " is not a checkpoint\n";
    return kUsage;
  }
  nlohmann::json cfg_json = default_config_json();
  merge_config_json(cfg_json, ck.at("config"));
  apply_environment(cfg_json);
  const auto config = config_from_json(cfg_json);
  const auto policy = policy_from_json(ck.at("policy"));
  const auto world = o.world ? load_world(*o.world)
                             : generate_world(config.world.seed, config.world.n_entities, config.world.n_chains,
                                              config.world.distractors);
  std::vector<RecordError> errors;
  const auto questions = load_questions(o.questions, errors);
  const auto hash = config_hash(config);

  std::vector<ScoredTrace> scored;
  try {
    auto judge = make_judge(config.judge, world);
    for (std::size_t i = 0; i < questions.size(); ++i) {
      const auto rec = rollout_one(policy, world, questions[i], config.rollout, derive_seed(o.seed, i, 0, 7));
      scored.push_back({rec.trajectory, questions[i],
                        score_trajectory(*judge, questions[i], rec.trajectory, config.weights, o.anneal)});
    }
  } catch (const JudgeError& e) {
    log << "error: judge failure: " << e.what() << "\n";
    return kJudge;
  } catch (const WorldError& e) {
    log << "error: " << e.what() << "\n";
    return kBadRecords;
  }
  write_report(o.out, hash, world, scored, errors);
  log << "evaluated " << scored.size() << " questions -> " << o.out.string() << "\n";
  if (!errors.empty()) {
    log << "unreadable question records:\n" << format_errors(errors);
    return kBadRecords;
  }
  return kOk;
}

// ---- score-trace ---------------------------------------------------------------

struct ScoreOptions {
  fs::path traces;
  fs::path world;
  std::optional<fs::path> questions;
  fs::path out;
  double anneal = 1.0;
};

// Resolves a trace's question from an explicit question file if given,
// otherwise from the world's id scheme.
class QuestionLookup {
public:
  QuestionLookup(const WorldSpec& world, const std::vector<Question>& explicit_qs) : world_(&world) {
    for (const auto& q : explicit_qs) by_id_.emplace(q.question_id, q);
  }
  Question find(const std::string& id) const {
    if (!by_id_.empty()) {
      auto it = by_id_.find(id);
      if (it == by_id_.end()) throw WorldError("no question with id '" + id + "'");
      return it->second;
    }
    return question_by_id(*world_, id);
  }

private:
  const WorldSpec* world_;
  std::map<std::string, Question> by_id_;
};

inline int run_score_trace(const ScoreOptions& o, const Config& config, std::ostream& log) {
  const auto world = load_world(o.world);
  std::vector<RecordError> errors;
  std::vector<Question> explicit_qs;
  if (o.questions) explicit_qs = load_questions(*o.questions, errors);
  if (!errors.empty()) {
    log << "error: unreadable question records:\n" << format_errors(errors);
    return kBadRecords;
  }
  const QuestionLookup lookup(world, explicit_qs);
  const auto hash = config_hash(config);
  std::vector<ScoredTrace> scored;
  const auto lines = split_lines(read_file(o.traces));
  try {
    auto judge = make_judge(config.judge, world);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      try {
        auto t = trajectory_from_jsonl_line(lines[i]);
        for (const auto& d : validate_trajectory(t)) {
          if (!is_warning(d.code)) throw TraceError("invalid trace: " + std::string(to_string(d.code)));
        }
        const auto q = lookup.find(t.question_id);
        const auto reward = score_trajectory(*judge, q, t, config.weights, o.anneal);
        scored.push_back({std::move(t), q, reward});
      } catch (const TraceError& e) {
        errors.push_back({i + 1, e.what()});
      } catch (const WorldError& e) {
        errors.push_back({i + 1, e.what()});
      }
    }
  } catch (const JudgeError& e) {
    log << "error: judge failure: " << e.what() << "\n";
    return kJudge;
  }
  write_report(o.out, hash, world, scored, errors);
  log << "scored " << scored.size() << " traces -> " << o.out.string() << "\n";
  if (!errors.empty()) {
    log << "skipped records:\n" << format_errors(errors);
    return kBadRecords;
  }
  return kOk;
}

// ---- replay ------------------------------------------------------------------

// Re-renders one stored trajectory, annotating each segment.
inline std::string annotate(const WorldSpec& world, const Question& q, const Trajectory& t, Judge& judge,
                            const RewardWeights& w, double anneal) {
  std::ostringstream out;
  out << "question " << q.question_id << ": " << q.text << "\n";
  out << "gold: " << q.gold_answer << "\n\n";
  std::size_t retrievals = 0;
  for (const auto& s : t.segments) {
    out << "<" << to_string(s.kind) << ">" << s.text << "</" << to_string(s.kind) << ">\n";
    if (s.kind == SegmentKind::Information) {
      ++retrievals;
      std::vector<std::string> hits;
      for (std::size_t h = 0; h < q.hop_chain.size(); ++h) {
        if (s.text.find(fact_sentence(q.hop_chain[h])) != std::string::npos) hits.push_back(std::to_string(h + 1));
      }
      const auto prefix = prefix_upto_retrieval(t, retrievals);
      out << "  -- retrieval " << retrievals << ": hops found ["
          << (hits.empty() ? std::string("none") : [&] {
               std::string j;
               for (const auto& x : hits) j += (j.empty() ? "" : ",") + x;
               return j;
             }())
          << "], sufficient so far=" << oracle_sufficient(world, q, strip_answers(prefix)) << "\n";
    } else if (s.kind == SegmentKind::Answer) {
      out << "  -- em=" << em(s.text, q.gold_answer) << " cem=" << cem(s.text, q.gold_answer)
          << " f1=" << text::format_double(token_f1(s.text, q.gold_answer)) << "\n";
    }
  }
  const auto b = score_trajectory(judge, q, t, w, anneal);
  const auto rubric = thinking_rubric(world, q, t);
  out << "\nreward: " << to_json(b).dump() << "\n";
  out << "rubric: grounded=" << rubric.grounded_claims << " chain_order=" << rubric.chain_order
      << " no_repeat=" << rubric.no_repeated_query << " concise=" << rubric.concise_retrieval << "\n";
  if (has_answer(t)) out << "category: " << to_string(classify_thinking(world, q, t)) << "\n";
  return out.str();
}

struct ReplayOptions {
  fs::path traces;
  fs::path world;
  std::optional<fs::path> questions;
  std::size_t index = 1;  // 1-based record number among non-empty lines
  double anneal = 1.0;
};

inline int run_replay(const ReplayOptions& o, const Config& config, std::ostream& out, std::ostream& log) {
  const auto world = load_world(o.world);
  std::vector<RecordError> errors;
  std::vector<Question> explicit_qs;
  if (o.questions) explicit_qs = load_questions(*o.questions, errors);
  const QuestionLookup lookup(world, explicit_qs);
  std::size_t seen = 0;
  const auto lines = split_lines(read_file(o.traces));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (text::trim(lines[i]).empty()) continue;
    if (++seen != o.index) continue;
    try {
      const auto t = trajectory_from_jsonl_line(lines[i]);
      const auto q = lookup.find(t.question_id);
      auto judge = make_judge(config.judge, world);
      out << annotate(world, q, t, *judge, config.weights, o.anneal);
      return kOk;
    } catch (const std::exception& e) {
      log << "error: line " << i + 1 << ": " << e.what() << "\n";
      return kBadRecords;
    }
  }
  log << "error: " << o.traces.string() << " has only " << seen << " records\n";
  return kBadRecords;
}

// ---- argument parsing ----------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& log) {
  CLI::App app{"Multi-hop retrieval RL on a synthetic knowledge world"};
  app.footer("\n" + config_keys_help() +
             "\nOverrides use --override key=value (repeatable); precedence: file < TIRES_OVERRIDES env < flag.\n"
             "TIRES_JUDGE_ENDPOINT=tcp://HOST:PORT or exec:CMD selects the external judge.\n");
  app.require_subcommand(1);

  std::string config_file = "default";
  std::vector<std::string> overrides;
  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "config JSON file, or 'default'");
    sub->add_option("--override", overrides, "dotted key=value override (repeatable)")->allow_extra_args(false);
  };

  auto* gen = app.add_subcommand("gen-world", "generate a world and its question set");
  add_config_opts(gen);
  std::string gen_out = "world";
  std::vector<std::size_t> gen_hops = {1, 2, 3, 4};
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--hops", gen_hops, "question hop counts to export")->check(CLI::Range(1, 4));

  auto* tr = app.add_subcommand("train", "train a policy and write curves, audit log, trajectories and checkpoints");
  add_config_opts(tr);
  std::string train_out;
  tr->add_option("--out", train_out, "output directory (same as --override output.dir=...)");

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "roll out a checkpoint on a question set and report metrics");
  std::string eval_world;
  ev->add_option("--checkpoint", eo.checkpoint, "checkpoint JSON")->required();
  ev->add_option("--questions", eo.questions, "questions JSONL")->required();
  ev->add_option("--out", eo.out, "output directory")->required();
  ev->add_option("--world", eval_world, "world JSON (default: regenerate from the checkpoint config)");
  ev->add_option("--seed", eo.seed, "rollout seed");
  ev->add_option("--anneal", eo.anneal, "annealing weight used in the reported total reward");

  ScoreOptions so;
  auto* sc = app.add_subcommand("score-trace", "score stored trajectories against a world");
  add_config_opts(sc);
  std::string score_questions;
  sc->add_option("--traces", so.traces, "trajectory JSONL")->required();
  sc->add_option("--world", so.world, "world JSON")->required();
  sc->add_option("--questions", score_questions, "questions JSONL (default: resolve ids against the world)");
  sc->add_option("--out", so.out, "output directory")->required();
  sc->add_option("--anneal", so.anneal, "annealing weight used in the total reward");

  ReplayOptions ro;
  auto* rp = app.add_subcommand("replay", "re-render one stored trajectory with reward annotations");
  add_config_opts(rp);
  std::string replay_questions;
  rp->add_option("--traces", ro.traces, "trajectory JSONL")->required();
  rp->add_option("--world", ro.world, "world JSON")->required();
  rp->add_option("--questions", replay_questions, "questions JSONL");
  rp->add_option("--index", ro.index, "1-based record number")->check(CLI::PositiveNumber);
  rp->add_option("--anneal", ro.anneal, "annealing weight");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, log) == 0 ? kOk : kUsage;
  }

  auto config = [&] {
    ConfigSources src{config_file, overrides, true};
    return load_config(src);
  };

  try {
    if (*gen) {
      std::sort(gen_hops.begin(), gen_hops.end());
      gen_hops.erase(std::unique(gen_hops.begin(), gen_hops.end()), gen_hops.end());
      return run_gen_world(config(), gen_hops, gen_out, log);
    }
    if (*tr) {
      if (!train_out.empty()) overrides.push_back("output.dir=" + train_out);
      return run_train(config(), log);
    }
    if (*ev) {
      if (!eval_world.empty()) eo.world = eval_world;
      return run_eval(eo, log);
    }
    if (*sc) {
      if (!score_questions.empty()) so.questions = score_questions;
      return run_score_trace(so, config(), log);
    }
    if (*rp) {
      if (!replay_questions.empty()) ro.questions = replay_questions;
      return run_replay(ro, config(), out, log);
    }
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kBadRecords;
  }
  return kUsage;
}

}  // namespace tiresrag::cli

#endif  // TIRESRAG_CLI_HPP
