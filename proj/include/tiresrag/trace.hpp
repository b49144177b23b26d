#pragma once
#ifndef TIRESRAG_TRACE_HPP
#define TIRESRAG_TRACE_HPP

// Tag-delimited trajectory format:
//   <think>..</think> <search>..</search> <information>..</information> <answer>..</answer>
// Parsing never throws; problems are reported as diagnostics with byte spans.

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tiresrag/text.hpp"

namespace tiresrag {

enum class SegmentKind { Think, Search, Information, Answer };

inline constexpr std::array<SegmentKind, 4> kAllSegmentKinds = {SegmentKind::Think, SegmentKind::Search,
                                                                 SegmentKind::Information, SegmentKind::Answer};

inline std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Search: return "search";
    case SegmentKind::Information: return "information";
    case SegmentKind::Answer: return "answer";
  }
  return "think";
}

inline std::optional<SegmentKind> segment_kind_from_string(std::string_view s) {
  for (auto k : kAllSegmentKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string text;
  std::size_t index = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Trajectory {
  std::vector<Segment> segments;
  std::string question_id;
  std::vector<double> step_logprobs;
  nlohmann::json meta = nlohmann::json::object();

  Trajectory& push(SegmentKind kind, std::string text) {
    segments.push_back(Segment{kind, std::move(text), segments.size()});
    return *this;
  }

  std::size_t count(SegmentKind kind) const {
    std::size_t n = 0;
    for (const auto& s : segments) n += (s.kind == kind);
    return n;
  }

  std::size_t retrieval_count() const { return count(SegmentKind::Information); }
};

enum class DiagnosticCode {
  UnbalancedTag,
  OrphanInformation,
  MissingAnswer,
  NestedTag,
  TrailingText,
  UnpairedSearch,
  EmptySearch,
  ExtraAnswer,
};

inline std::string_view to_string(DiagnosticCode c) {
  switch (c) {
    case DiagnosticCode::UnbalancedTag: return "UnbalancedTag";
    case DiagnosticCode::OrphanInformation: return "OrphanInformation";
    case DiagnosticCode::MissingAnswer: return "MissingAnswer";
    case DiagnosticCode::NestedTag: return "NestedTag";
    case DiagnosticCode::TrailingText: return "TrailingText";
    case DiagnosticCode::UnpairedSearch: return "UnpairedSearch";
    case DiagnosticCode::EmptySearch: return "EmptySearch";
    case DiagnosticCode::ExtraAnswer: return "ExtraAnswer";
  }
  return "UnbalancedTag";
}

// TrailingText and ExtraAnswer are warnings; everything else is an error.
inline bool is_warning(DiagnosticCode c) {
  return c == DiagnosticCode::TrailingText || c == DiagnosticCode::ExtraAnswer;
}

struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  friend bool operator==(const ByteSpan&, const ByteSpan&) = default;
};

struct ParseDiagnostic {
  DiagnosticCode code;
  ByteSpan span;
  std::string message;
};

struct ParseResult {
  // Present unless the tag structure itself is broken. A trajectory with a
  // MissingAnswer diagnostic is a partial trace: usable, but incomplete.
  std::optional<Trajectory> trajectory;
  std::vector<ParseDiagnostic> diagnostics;

  bool has(DiagnosticCode c) const {
    for (const auto& d : diagnostics) {
      if (d.code == c) return true;
    }
    return false;
  }

  bool ok() const {
    if (!trajectory) return false;
    for (const auto& d : diagnostics) {
      if (!is_warning(d.code)) return false;
    }
    return true;
  }

  bool partial() const {
    if (!trajectory || !has(DiagnosticCode::MissingAnswer)) return false;
    for (const auto& d : diagnostics) {
      if (!is_warning(d.code) && d.code != DiagnosticCode::MissingAnswer) return false;
    }
    return true;
  }
};

class TraceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct TagHit {
  SegmentKind kind;
  bool closing;
  std::size_t length;
};

inline std::optional<TagHit> match_tag(std::string_view s, std::size_t pos) {
  if (pos >= s.size() || s[pos] != '<') return std::nullopt;
  const bool closing = pos + 1 < s.size() && s[pos + 1] == '/';
  const std::size_t name_at = pos + (closing ? 2 : 1);
  for (auto k : kAllSegmentKinds) {
    const auto name = to_string(k);
    if (s.substr(name_at, name.size()) == name && name_at + name.size() < s.size() &&
        s[name_at + name.size()] == '>') {
      return TagHit{k, closing, name_at + name.size() + 1 - pos};
    }
  }
  return std::nullopt;
}

inline std::string open_tag(SegmentKind k) { return "<" + std::string(to_string(k)) + ">"; }
inline std::string close_tag(SegmentKind k) { return "</" + std::string(to_string(k)) + ">"; }

}  // namespace detail

inline bool contains_tag_delimiter(std::string_view s) {
  for (std::size_t i = s.find('<'); i != std::string_view::npos; i = s.find('<', i + 1)) {
    if (detail::match_tag(s, i)) return true;
  }
  return false;
}

inline ParseResult parse_trajectory(std::string_view raw) {
  ParseResult result;
  auto& diags = result.diagnostics;
  Trajectory t;
  std::vector<ByteSpan> spans;  // full span (open tag .. close tag) per segment

  std::optional<SegmentKind> open;
  std::size_t open_at = 0;
  std::size_t content_at = 0;
  std::size_t gap_at = 0;  // start of text outside any segment

  auto flag_gap = [&](std::size_t end) {
    if (end > gap_at && !text::trim(raw.substr(gap_at, end - gap_at)).empty()) {
      diags.push_back({DiagnosticCode::TrailingText, {gap_at, end}, "text outside of any tag"});
    }
  };

  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t lt = raw.find('<', pos);
    if (lt == std::string_view::npos) break;
    const auto hit = detail::match_tag(raw, lt);
    if (!hit) {
      pos = lt + 1;
      continue;
    }
    const ByteSpan tag_span{lt, lt + hit->length};
    if (!hit->closing) {
      if (open) {
        diags.push_back({DiagnosticCode::NestedTag, tag_span,
                         detail::open_tag(hit->kind) + " inside " + detail::open_tag(*open)});
        return result;
      }
      flag_gap(lt);
      open = hit->kind;
      open_at = lt;
      content_at = tag_span.end;
    } else {
      if (!open) {
        diags.push_back({DiagnosticCode::UnbalancedTag, tag_span,
                         detail::close_tag(hit->kind) + " without a matching opening tag"});
        return result;
      }
      if (*open != hit->kind) {
        diags.push_back({DiagnosticCode::UnbalancedTag, tag_span,
                         detail::close_tag(hit->kind) + " closes " + detail::open_tag(*open)});
        return result;
      }
      t.push(*open, std::string(raw.substr(content_at, lt - content_at)));
      spans.push_back({open_at, tag_span.end});
      open.reset();
      gap_at = tag_span.end;
    }
    pos = tag_span.end;
  }
  if (open) {
    diags.push_back({DiagnosticCode::UnbalancedTag, {open_at, raw.size()},
                     detail::open_tag(*open) + " is never closed"});
    return result;
  }
  flag_gap(raw.size());

  bool pairing_ok = true;
  std::size_t answers = 0;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    const auto& seg = t.segments[i];
    switch (seg.kind) {
      case SegmentKind::Search:
        if (text::trim(seg.text).empty()) {
          diags.push_back({DiagnosticCode::EmptySearch, spans[i], "empty search query"});
          pairing_ok = false;
        }
        if (i + 1 >= t.segments.size() || t.segments[i + 1].kind != SegmentKind::Information) {
          diags.push_back({DiagnosticCode::UnpairedSearch, spans[i], "search is not followed by information"});
          pairing_ok = false;
        }
        break;
      case SegmentKind::Information:
        if (i == 0 || t.segments[i - 1].kind != SegmentKind::Search) {
          diags.push_back({DiagnosticCode::OrphanInformation, spans[i], "information without a preceding search"});
          pairing_ok = false;
        }
        break;
      case SegmentKind::Answer:
        if (++answers == 3) {
          diags.push_back({DiagnosticCode::ExtraAnswer, spans[i], "more than two answers"});
        }
        break;
      case SegmentKind::Think: break;
    }
  }
  if (!pairing_ok) return result;
  if (answers == 0) {
    diags.push_back({DiagnosticCode::MissingAnswer, {0, raw.size()}, "no <answer> segment"});
  }
  result.trajectory = std::move(t);
  return result;
}

// Canonical form: segments joined by a single newline.
inline std::string render_trajectory(const Trajectory& t) {
  std::string out;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    if (i) out.push_back('\n');
    const auto& s = t.segments[i];
    out += detail::open_tag(s.kind);
    out += s.text;
    out += detail::close_tag(s.kind);
  }
  return out;
}

// Diagnostics for an in-memory trajectory, with spans into its canonical rendering.
inline std::vector<ParseDiagnostic> validate_trajectory(const Trajectory& t) {
  const std::string rendered = render_trajectory(t);
  auto res = parse_trajectory(rendered);
  if (res.trajectory && res.trajectory->segments.size() != t.segments.size()) {
    res.diagnostics.push_back({DiagnosticCode::NestedTag, {0, rendered.size()}, "segment text contains a tag"});
  }
  return std::move(res.diagnostics);
}

inline std::vector<std::string> intermediate_answers(const Trajectory& t) {
  std::vector<std::string> out;
  for (const auto& s : t.segments) {
    if (s.kind == SegmentKind::Answer) out.emplace_back(text::trim(s.text));
  }
  return out;
}

inline std::string final_answer(const Trajectory& t) {
  for (auto it = t.segments.rbegin(); it != t.segments.rend(); ++it) {
    if (it->kind == SegmentKind::Answer) return std::string(text::trim(it->text));
  }
  throw TraceError("final_answer: trajectory has no answer segment");
}

inline bool has_answer(const Trajectory& t) { return t.count(SegmentKind::Answer) > 0; }

// Segments up to and including the i-th (1-based) information segment.
inline Trajectory prefix_upto_retrieval(const Trajectory& t, std::size_t i) {
  if (i == 0) throw TraceError("prefix_upto_retrieval: hop index starts at 1");
  Trajectory out;
  out.question_id = t.question_id;
  std::size_t seen = 0;
  for (const auto& s : t.segments) {
    out.segments.push_back(s);
    if (s.kind == SegmentKind::Information && ++seen == i) return out;
  }
  throw TraceError("prefix_upto_retrieval: hop " + std::to_string(i) + " exceeds retrieval count " +
                   std::to_string(seen));
}

// The reasoning-and-evidence part (RD): everything except answer segments.
inline Trajectory strip_answers(const Trajectory& t) {
  Trajectory out;
  out.question_id = t.question_id;
  for (const auto& s : t.segments) {
    if (s.kind != SegmentKind::Answer) out.push(s.kind, s.text);
  }
  return out;
}

// ---- JSONL interchange -------------------------------------------------------

inline nlohmann::json to_json(const Trajectory& t) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : t.segments) {
    segs.push_back({{"kind", to_string(s.kind)}, {"text", s.text}});
  }
  return {{"question_id", t.question_id},
          {"segments", std::move(segs)},
          {"step_logprobs", t.step_logprobs},
          {"meta", t.meta}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw TraceError("trajectory record must be a JSON object");
  Trajectory t;
  if (!j.contains("question_id") || !j["question_id"].is_string()) {
    throw TraceError("trajectory record: missing string field 'question_id'");
  }
  t.question_id = j["question_id"].get<std::string>();
  if (!j.contains("segments") || !j["segments"].is_array()) {
    throw TraceError("trajectory record: missing array field 'segments'");
  }
  for (const auto& s : j["segments"]) {
    if (!s.is_object() || !s.contains("kind") || !s["kind"].is_string() || !s.contains("text") ||
        !s["text"].is_string()) {
      throw TraceError("trajectory record: segment needs string 'kind' and 'text'");
    }
    const auto kind = segment_kind_from_string(s["kind"].get<std::string>());
    if (!kind) throw TraceError("trajectory record: unknown segment kind '" + s["kind"].get<std::string>() + "'");
    t.push(*kind, s["text"].get<std::string>());
  }
  if (j.contains("step_logprobs")) {
    if (!j["step_logprobs"].is_array()) throw TraceError("trajectory record: 'step_logprobs' must be an array");
    for (const auto& v : j["step_logprobs"]) {
      if (!v.is_number()) throw TraceError("trajectory record: 'step_logprobs' must hold numbers");
      t.step_logprobs.push_back(v.get<double>());
    }
  }
  if (j.contains("meta")) {
    if (!j["meta"].is_object()) throw TraceError("trajectory record: 'meta' must be an object");
    t.meta = j["meta"];
  }
  return t;
}

inline std::string to_jsonl_line(const Trajectory& t) { return to_json(t).dump(); }

inline Trajectory trajectory_from_jsonl_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw TraceError(std::string("malformed JSON: ") + e.what());
  }
  return trajectory_from_json(j);
}

}  // namespace tiresrag

#endif  // TIRESRAG_TRACE_HPP
