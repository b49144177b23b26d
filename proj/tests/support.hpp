#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tiresrag/policy.hpp"
#include "tiresrag/trace.hpp"
#include "tiresrag/world.hpp"

namespace tiresrag::testing {

inline std::string fixture(const std::string& name) {
  std::ifstream in(std::string(TIRESRAG_FIXTURES) + "/" + name, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const WorldSpec& default_world() {
  static const WorldSpec w = generate_world(1, 40, 5, 2);
  return w;
}

// Search every hop in order with its exact subject+relation query, then answer.
inline Trajectory perfect_trajectory(const WorldSpec& w, const Question& q, std::size_t k = 5) {
  Trajectory t;
  t.question_id = q.question_id;
  for (const auto& h : q.hop_chain) {
    t.push(SegmentKind::Think, "I need the " + h.relation + " of " + h.subject + ".");
    const std::string query = h.relation + " of " + h.subject;
    t.push(SegmentKind::Search, query);
    t.push(SegmentKind::Information, render_information(retrieve(w, query, k)));
  }
  t.push(SegmentKind::Think, "So the answer is " + q.gold_answer + ".");
  t.push(SegmentKind::Answer, q.gold_answer);
  return t;
}

// Appends one retrieval for `query`.
inline void add_search(const WorldSpec& w, Trajectory& t, const std::string& query, std::size_t k = 5) {
  t.push(SegmentKind::Search, query);
  t.push(SegmentKind::Information, render_information(retrieve(w, query, k)));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tiresrag_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tiresrag::testing
