#pragma once
#ifndef TIRESRAG_TEXT_HPP
#define TIRESRAG_TEXT_HPP

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tiresrag::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

inline bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) || (u >= 123 && u <= 126);
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Open-QA answer normalization: lowercase, drop ASCII punctuation, drop the
// articles a/an/the, collapse whitespace. Non-ASCII bytes pass through.
inline std::string normalize_answer(std::string_view s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (char c : s) {
    if (is_ascii_punct(c)) continue;
    lowered.push_back(ascii_lower(c));
  }
  std::string out;
  for (const auto& tok : split_whitespace(lowered)) {
    if (tok == "a" || tok == "an" || tok == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

inline std::vector<std::string> answer_tokens(std::string_view s) { return split_whitespace(normalize_answer(s)); }

// Lowercased alphanumeric runs; the retrieval vocabulary.
// Function words carry no retrieval signal; every fact sentence contains
// "the ... of ... is", so keeping them would let any query touch every document.
inline bool is_stop_word(std::string_view t) {
  static constexpr std::string_view kStop[] = {"a", "an", "and", "both", "is", "of", "the", "to", "was", "were", "what", "who"};
  for (auto w : kStop) {
    if (t == w) return true;
  }
  return false;
}

inline std::vector<std::string> lexical_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !is_stop_word(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || u >= 0x80) {
      cur.push_back(ascii_lower(c));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

// Shortest round-trip decimal form; stable across runs.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace tiresrag::text

#endif  // TIRESRAG_TEXT_HPP
