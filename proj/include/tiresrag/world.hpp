#pragma once
#ifndef TIRESRAG_WORLD_HPP
#define TIRESRAG_WORLD_HPP

// Synthetic multi-hop QA world: a seeded knowledge graph whose facts are
// verbalized one per document, a lexical retriever over those documents, and
// an exact sufficiency oracle.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tiresrag/rng.hpp"
#include "tiresrag/text.hpp"
#include "tiresrag/trace.hpp"

namespace tiresrag {

inline constexpr std::size_t kChainLength = 4;
inline constexpr std::size_t kMaxHops = kChainLength;

inline const std::vector<std::string>& relation_vocabulary() {
  static const std::vector<std::string> v = {"mentor",  "rival",  "employer",  "sibling", "spouse",
                                             "neighbor", "patron", "successor", "teacher", "partner"};
  return v;
}

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
  friend bool operator==(const Triple&, const Triple&) = default;
};

inline std::string fact_sentence(const Triple& t) {
  return "The " + t.relation + " of " + t.subject + " is " + t.object + ".";
}

struct Document {
  std::string id;
  std::string text;
  std::size_t fact = 0;  // index into WorldSpec::facts
  friend bool operator==(const Document&, const Document&) = default;
};

struct WorldParams {
  std::uint64_t seed = 1;
  std::size_t n_entities = 40;
  std::size_t n_chains = 5;
  std::size_t distractors = 2;
  friend bool operator==(const WorldParams&, const WorldParams&) = default;
};

class WorldError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct WorldSpec {
  WorldParams params;
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<Triple> facts;
  std::vector<Document> documents;
  // Fact indices of each disjoint 4-hop chain, in hop order.
  std::vector<std::array<std::size_t, kChainLength>> chains;

  // Sorted unique lexical tokens per document (retrieval index).
  std::vector<std::vector<std::string>> doc_tokens;

  void build_index() {
    doc_tokens.clear();
    doc_tokens.reserve(documents.size());
    for (const auto& d : documents) {
      auto toks = text::lexical_tokens(d.text);
      std::sort(toks.begin(), toks.end());
      toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
      doc_tokens.push_back(std::move(toks));
    }
  }

  friend bool operator==(const WorldSpec& a, const WorldSpec& b) {
    return a.params == b.params && a.entities == b.entities && a.relations == b.relations && a.facts == b.facts &&
           a.documents == b.documents && a.chains == b.chains;
  }
};

struct Question {
  std::string question_id;
  std::string text;
  std::vector<Triple> hop_chain;
  std::string gold_answer;
  std::size_t hops = 0;
};

struct RetrievedDoc {
  std::string doc_id;
  std::string text;
  double score = 0.0;
};

struct RetrievalResult {
  std::string query;
  std::vector<RetrievedDoc> docs;
  std::size_t k = 0;
};

namespace detail {

inline const std::vector<std::string>& name_syllables() {
  static const std::vector<std::string> v = {"ka", "lo", "mi", "ra", "te", "vo", "su", "ne", "da", "ri", "po", "ul",
                                             "an", "or", "es", "zu", "be", "qui", "sha", "tor", "mel", "vin", "gar",
                                             "fen", "hal", "jo", "ki", "ny", "ost", "pe", "sel", "wyn"};
  return v;
}

inline std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

inline std::string make_name_word(Rng& rng) {
  const auto& syl = name_syllables();
  const std::size_t parts = 2 + rng.index(2);
  std::string w;
  for (std::size_t i = 0; i < parts; ++i) w += syl[rng.index(syl.size())];
  return capitalize(w);
}

inline std::string distractor_sentence(const std::string& a, const std::string& b, const std::string& rel) {
  return a + " and " + b + " were both linked to a " + rel + " dispute.";
}

}  // namespace detail

// Entity-disjoint chains need five entities each (four hops).
inline WorldSpec generate_world(std::uint64_t seed, std::size_t n_entities, std::size_t n_chains,
                                std::size_t distractors) {
  if (n_chains == 0) throw WorldError("generate_world: need at least one chain");
  if (n_entities < (kChainLength + 1) * n_chains) {
    throw WorldError("generate_world: " + std::to_string(n_chains) + " disjoint " + std::to_string(kChainLength) +
                     "-hop chains need " + std::to_string((kChainLength + 1) * n_chains) + " entities, got " +
                     std::to_string(n_entities));
  }
  Rng rng(seed);
  WorldSpec w;
  w.params = {seed, n_entities, n_chains, distractors};
  w.relations = relation_vocabulary();

  // Entity names: two capitalized words; every word unique across the world
  // and distinct from the sentence vocabulary.
  std::set<std::string> used_words;
  for (const auto& r : w.relations) used_words.insert(r);
  for (const char* reserved : {"the", "of", "is", "and", "were", "both", "linked", "to", "a", "dispute", "an",
                               "what", "who", "unknown"}) {
    used_words.insert(reserved);
  }
  std::size_t attempts = 0;
  while (w.entities.size() < n_entities) {
    if (++attempts > 1000 * (n_entities + 10)) throw WorldError("generate_world: name space exhausted");
    auto first = detail::make_name_word(rng);
    auto last = detail::make_name_word(rng);
    std::string lf = first, ll = last;
    for (auto& c : lf) c = text::ascii_lower(c);
    for (auto& c : ll) c = text::ascii_lower(c);
    if (lf == ll || used_words.count(lf) || used_words.count(ll)) continue;
    used_words.insert(lf);
    used_words.insert(ll);
    w.entities.push_back(first + " " + last);
  }

  std::vector<std::size_t> order(n_entities);
  for (std::size_t i = 0; i < n_entities; ++i) order[i] = i;
  rng.shuffle(order);

  std::vector<Triple> facts;
  std::vector<std::array<std::size_t, kChainLength>> chains;
  // (entity, relation) pairs used as subject / as object. A fact sentence
  // naming its object must not pair it with one of the object's own outgoing
  // relations, or "rel of object" would match two documents equally.
  std::set<std::pair<std::size_t, std::string>> used_subject_rel, used_object_rel;
  std::vector<bool> is_chain_end(n_entities, false);
  for (std::size_t c = 0; c < n_chains; ++c) {
    std::array<std::size_t, kChainLength> chain{};
    for (std::size_t h = 0; h < kChainLength; ++h) {
      const auto subj = order[c * (kChainLength + 1) + h];
      const auto obj = order[c * (kChainLength + 1) + h + 1];
      // relations within a chain are pairwise distinct
      std::string rel;
      auto reused = [&](const std::string& r) {
        for (std::size_t p = 0; p < h; ++p) {
          if (facts[chain[p]].relation == r) return true;
        }
        return false;
      };
      do {
        rel = w.relations[rng.index(w.relations.size())];
      } while (used_object_rel.count({subj, rel}) || reused(rel));
      used_subject_rel.insert({subj, rel});
      used_object_rel.insert({obj, rel});
      chain[h] = facts.size();
      facts.push_back({w.entities[subj], rel, w.entities[obj]});
    }
    is_chain_end[order[c * (kChainLength + 1) + kChainLength]] = true;
    chains.push_back(chain);
  }

  // One extra fact per non-terminal entity. Chain ends stay out of every other
  // fact so each gold answer occurs in exactly one fact sentence.
  std::vector<std::size_t> pool;
  for (std::size_t e = 0; e < n_entities; ++e) {
    if (!is_chain_end[e]) pool.push_back(e);
  }
  if (pool.size() >= 2) {
    for (std::size_t e : pool) {
      std::vector<std::string> free_rels;
      for (const auto& r : w.relations) {
        if (!used_subject_rel.count({e, r}) && !used_object_rel.count({e, r})) free_rels.push_back(r);
      }
      if (free_rels.empty()) continue;
      const auto& rel = free_rels[rng.index(free_rels.size())];
      std::vector<std::size_t> objs;
      for (std::size_t o : pool) {
        if (o != e && !used_subject_rel.count({o, rel})) objs.push_back(o);
      }
      if (objs.empty()) continue;
      std::size_t obj = pool[rng.index(pool.size())];
      if (obj == e || used_subject_rel.count({obj, rel})) obj = objs[rng.index(objs.size())];
      used_subject_rel.insert({e, rel});
      used_object_rel.insert({obj, rel});
      facts.push_back({w.entities[e], rel, w.entities[obj]});
    }
  }

  // Shuffle fact storage so document ids carry no chain structure.
  std::vector<std::size_t> perm(facts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::size_t> new_pos(facts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    new_pos[perm[i]] = i;
    w.facts.push_back(facts[perm[i]]);
  }
  for (auto chain : chains) {
    for (auto& f : chain) f = new_pos[f];
    w.chains.push_back(chain);
  }

  // Distractors are redrawn until the document names no other fact's
  // (subject, relation) pair, so the subject+relation query of every fact
  // ranks that fact's document strictly first.
  std::map<std::string, std::size_t> entity_index;
  for (std::size_t e = 0; e < n_entities; ++e) entity_index[w.entities[e]] = e;
  std::map<std::pair<std::size_t, std::string>, std::size_t> fact_of;
  for (std::size_t i = 0; i < w.facts.size(); ++i) fact_of[{entity_index.at(w.facts[i].subject), w.facts[i].relation}] = i;

  // A later hop's document must not mention an earlier hop's subject or
  // relation, so the ordered hop queries surface hop documents in order.
  std::vector<std::set<std::size_t>> banned_entities(w.facts.size());
  std::vector<std::set<std::string>> banned_rels(w.facts.size());
  for (const auto& chain : w.chains) {
    for (std::size_t b = 1; b < chain.size(); ++b) {
      for (std::size_t a = 0; a < b; ++a) {
        banned_entities[chain[b]].insert(entity_index.at(w.facts[chain[a]].subject));
        banned_rels[chain[b]].insert(w.facts[chain[a]].relation);
      }
    }
  }

  const std::size_t width = std::max<std::size_t>(3, std::to_string(w.facts.size()).size());
  for (std::size_t i = 0; i < w.facts.size(); ++i) {
    const auto& f = w.facts[i];
    std::vector<std::string> sentences;
    for (int attempt = 0;; ++attempt) {
      sentences.assign(1, fact_sentence(f));
      if (attempt == 64) break;  // give up on distractors for this document
      std::vector<std::size_t> named = {entity_index.at(f.subject), entity_index.at(f.object)};
      std::vector<std::string> rels = {f.relation};
      for (std::size_t d = 0; d < distractors; ++d) {
        const auto a = rng.index(n_entities);
        auto b = rng.index(n_entities);
        if (b == a) b = (b + 1) % n_entities;
        const auto& r = w.relations[rng.index(w.relations.size())];
        sentences.push_back(detail::distractor_sentence(w.entities[a], w.entities[b], r));
        named.push_back(a);
        named.push_back(b);
        rels.push_back(r);
      }
      bool clash = false;
      for (auto e : named) clash = clash || banned_entities[i].count(e);
      for (const auto& r : rels) clash = clash || banned_rels[i].count(r);
      for (auto e : named) {
        for (const auto& r : rels) {
          auto it = fact_of.find({e, r});
          if (it != fact_of.end() && it->second != i) clash = true;
        }
      }
      if (!clash) break;
    }
    rng.shuffle(sentences);
    std::string body;
    for (const auto& s : sentences) {
      if (!body.empty()) body.push_back(' ');
      body += s;
    }
    std::string id = std::to_string(i);
    id = "d" + std::string(width - std::min(width, id.size()), '0') + id;
    w.documents.push_back({std::move(id), std::move(body), i});
  }
  w.build_index();
  return w;
}

inline std::string question_text(const std::vector<Triple>& chain) {
  std::string out = "What is";
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    out += (it == chain.rbegin() ? " the " : " of the ") + it->relation;
  }
  out += " of " + chain.front().subject + "?";
  return out;
}

// The question over the last `hops` facts of chain `chain_index`; the gold
// answer is always the chain's terminal entity.
inline Question question_for_chain(const WorldSpec& w, std::size_t chain_index, std::size_t hops) {
  if (hops < 1 || hops > kMaxHops) {
    throw WorldError("question: hops must be in [1, " + std::to_string(kMaxHops) + "], got " + std::to_string(hops));
  }
  if (chain_index >= w.chains.size()) throw WorldError("question: no chain " + std::to_string(chain_index));
  Question q;
  q.hops = hops;
  for (std::size_t h = kChainLength - hops; h < kChainLength; ++h) {
    q.hop_chain.push_back(w.facts[w.chains[chain_index][h]]);
  }
  q.gold_answer = q.hop_chain.back().object;
  q.text = question_text(q.hop_chain);
  q.question_id = "c" + std::to_string(chain_index) + "-h" + std::to_string(hops);
  return q;
}

inline Question sample_question(const WorldSpec& w, std::size_t hops, std::uint64_t rng_seed) {
  if (hops < 1 || hops > kMaxHops || w.chains.empty()) {
    throw WorldError("sample_question: no chain of length " + std::to_string(hops));
  }
  Rng rng(rng_seed);
  return question_for_chain(w, rng.index(w.chains.size()), hops);
}

inline std::vector<Question> all_questions(const WorldSpec& w, std::size_t hops) {
  std::vector<Question> out;
  for (std::size_t c = 0; c < w.chains.size(); ++c) out.push_back(question_for_chain(w, c, hops));
  return out;
}

// Inverse of the "c{chain}-h{hops}" id scheme.
inline Question question_by_id(const WorldSpec& w, std::string_view id) {
  std::size_t chain = 0, hops = 0;
  const auto dash = id.find("-h");
  auto parse = [](std::string_view s, std::size_t& out) {
    if (s.empty() || s.size() > 9) return false;
    out = 0;
    for (char ch : s) {
      if (ch < '0' || ch > '9') return false;
      out = out * 10 + static_cast<std::size_t>(ch - '0');
    }
    return true;
  };
  if (id.size() < 4 || id[0] != 'c' || dash == std::string_view::npos || !parse(id.substr(1, dash - 1), chain) ||
      !parse(id.substr(dash + 2), hops)) {
    throw WorldError("question: unrecognized id '" + std::string(id) + "'");
  }
  return question_for_chain(w, chain, hops);
}

// Lexical retrieval: score = |shared unique tokens| / |unique query tokens|,
// ranked by score then doc id; documents sharing no token are dropped.
inline RetrievalResult retrieve(const WorldSpec& w, std::string_view query, std::size_t k) {
  if (k == 0) throw WorldError("retrieve: k must be at least 1");
  RetrievalResult res;
  res.query = std::string(query);
  res.k = k;
  auto q = text::lexical_tokens(query);
  std::sort(q.begin(), q.end());
  q.erase(std::unique(q.begin(), q.end()), q.end());
  if (q.empty()) return res;

  struct Scored {
    std::size_t doc;
    std::size_t shared;
  };
  std::vector<Scored> scored;
  for (std::size_t d = 0; d < w.documents.size(); ++d) {
    const auto& toks = w.doc_tokens[d];
    std::size_t shared = 0;
    for (const auto& t : q) shared += std::binary_search(toks.begin(), toks.end(), t);
    if (shared > 0) scored.push_back({d, shared});
  }
  std::stable_sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.shared != b.shared) return a.shared > b.shared;
    return w.documents[a.doc].id < w.documents[b.doc].id;
  });
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) {
    const auto& d = w.documents[scored[i].doc];
    res.docs.push_back({d.id, d.text, static_cast<double>(scored[i].shared) / static_cast<double>(q.size())});
  }
  return res;
}

inline std::string render_information(const RetrievalResult& r) {
  std::string out;
  for (const auto& d : r.docs) {
    if (!out.empty()) out.push_back('\n');
    out += "[" + d.doc_id + "] " + d.text;
  }
  return out;
}

// 1 iff every hop's fact sentence occurs inside some information segment.
inline int oracle_sufficient(const WorldSpec&, const Question& q, const Trajectory& rd) {
  for (const auto& hop : q.hop_chain) {
    const auto sentence = fact_sentence(hop);
    bool found = false;
    for (const auto& s : rd.segments) {
      if (s.kind == SegmentKind::Information && s.text.find(sentence) != std::string::npos) {
        found = true;
        break;
      }
    }
    if (!found) return 0;
  }
  return 1;
}

// Smallest retrieval count i whose prefix is sufficient.
inline std::optional<std::size_t> sufficiency_point(const WorldSpec& w, const Question& q, const Trajectory& t) {
  const auto n = t.retrieval_count();
  for (std::size_t i = 1; i <= n; ++i) {
    if (oracle_sufficient(w, q, prefix_upto_retrieval(t, i))) return i;
  }
  return std::nullopt;
}

// ---- serialization -------------------------------------------------------------

inline nlohmann::json to_json(const Triple& t) {
  return {{"subject", t.subject}, {"relation", t.relation}, {"object", t.object}};
}

inline Triple triple_from_json(const nlohmann::json& j) {
  return {j.at("subject").get<std::string>(), j.at("relation").get<std::string>(), j.at("object").get<std::string>()};
}

inline nlohmann::json to_json(const WorldParams& p) {
  return {{"seed", p.seed}, {"entities", p.n_entities}, {"chains", p.n_chains}, {"distractors", p.distractors}};
}

inline nlohmann::json to_json(const WorldSpec& w) {
  nlohmann::json facts = nlohmann::json::array(), docs = nlohmann::json::array(), chains = nlohmann::json::array();
  for (const auto& f : w.facts) facts.push_back(to_json(f));
  for (const auto& d : w.documents) docs.push_back({{"doc_id", d.id}, {"text", d.text}, {"fact", d.fact}});
  for (const auto& c : w.chains) chains.push_back(c);
  return {{"params", to_json(w.params)}, {"entities", w.entities}, {"relations", w.relations},
          {"facts", facts},              {"documents", docs},      {"chains", chains}};
}

inline std::string serialize_world(const WorldSpec& w) { return to_json(w).dump(2) + "\n"; }

inline WorldSpec world_from_json(const nlohmann::json& j) {
  try {
    WorldSpec w;
    const auto& p = j.at("params");
    w.params = {p.at("seed").get<std::uint64_t>(), p.at("entities").get<std::size_t>(),
                p.at("chains").get<std::size_t>(), p.at("distractors").get<std::size_t>()};
    w.entities = j.at("entities").get<std::vector<std::string>>();
    w.relations = j.at("relations").get<std::vector<std::string>>();
    for (const auto& f : j.at("facts")) w.facts.push_back(triple_from_json(f));
    for (const auto& d : j.at("documents")) {
      const auto fact = d.at("fact").get<std::size_t>();
      if (fact >= w.facts.size()) throw WorldError("world: document references missing fact");
      w.documents.push_back({d.at("doc_id").get<std::string>(), d.at("text").get<std::string>(), fact});
    }
    for (const auto& c : j.at("chains")) {
      auto chain = c.get<std::array<std::size_t, kChainLength>>();
      for (auto f : chain) {
        if (f >= w.facts.size()) throw WorldError("world: chain references missing fact");
      }
      w.chains.push_back(chain);
    }
    w.build_index();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw WorldError(std::string("world: malformed document: ") + e.what());
  }
}

inline nlohmann::json to_json(const Question& q) {
  nlohmann::json chain = nlohmann::json::array();
  for (const auto& t : q.hop_chain) chain.push_back(to_json(t));
  return {{"question_id", q.question_id},
          {"text", q.text},
          {"hops", q.hops},
          {"gold_answer", q.gold_answer},
          {"hop_chain", chain}};
}

inline Question question_from_json(const nlohmann::json& j) {
  try {
    Question q;
    q.question_id = j.at("question_id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    q.hops = j.at("hops").get<std::size_t>();
    q.gold_answer = j.at("gold_answer").get<std::string>();
    for (const auto& t : j.at("hop_chain")) q.hop_chain.push_back(triple_from_json(t));
    if (q.hop_chain.size() != q.hops) throw WorldError("question: hop_chain length differs from hops");
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw WorldError(std::string("question: malformed record: ") + e.what());
  }
}

}  // namespace tiresrag

#endif  // TIRESRAG_WORLD_HPP
