#pragma once
// Abstract corpus and claim data model, JSONL loaders and the train/validation
// split. Everything here is immutable once loaded.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rerrfact/errors.hpp"
#include "rerrfact/text.hpp"

namespace rerrfact {

using DocId = std::int64_t;
using ClaimId = std::int64_t;

// Integer values double as the class index of the 3-way classifier and as
// the argmax tie-break order.
enum class Stance : int { NoInfo = 0, Refutes = 1, Supports = 2 };

inline std::string_view external_label(Stance s) {
  switch (s) {
    case Stance::Supports: return "SUPPORT";
    case Stance::Refutes: return "CONTRADICT";
    case Stance::NoInfo: return "NOINFO";
  }
  return "NOINFO";
}

// Accepts SUPPORT/SUPPORTS and CONTRADICT/REFUTES/REFUTE, any case.
inline std::optional<Stance> parse_gold_label(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "support" || lower == "supports") return Stance::Supports;
  if (lower == "contradict" || lower == "refutes" || lower == "refute") return Stance::Refutes;
  return std::nullopt;
}

struct AbstractDoc {
  DocId doc_id = 0;
  std::string title;
  std::vector<std::string> sentences;

  std::size_t n() const { return sentences.size(); }
  bool operator==(const AbstractDoc&) const = default;
};

class Corpus {
 public:
  Corpus() = default;

  // Validates doc invariants; throws DataError on violation.
  static Corpus from_docs(std::vector<AbstractDoc> docs) {
    Corpus c;
    for (auto& d : docs) c.add(std::move(d), 0);
    return c;
  }

  const AbstractDoc* find(DocId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &docs_[it->second];
  }

  const AbstractDoc& at(DocId id) const {
    const auto* d = find(id);
    if (d == nullptr) throw DataError("unknown doc_id " + std::to_string(id));
    return *d;
  }

  bool contains(DocId id) const { return index_.count(id) != 0; }
  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::vector<AbstractDoc>& docs() const { return docs_; }
  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }

  std::size_t max_sentence_count() const {
    std::size_t m = 0;
    for (const auto& d : docs_) m = std::max(m, d.n());
    return m;
  }

  bool operator==(const Corpus& o) const { return docs_ == o.docs_; }

 private:
  friend Corpus parse_corpus(std::istream&, const std::string&);

  // line == 0 means "no source line" (programmatic construction).
  void add(AbstractDoc doc, std::size_t line) {
    const auto where = [&] {
      return line ? "line " + std::to_string(line) + ": " : std::string{};
    };
    if (doc.sentences.empty()) {
      throw DataError(where() + "doc_id " + std::to_string(doc.doc_id) + " has an empty sentence list");
    }
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      if (text::trim(doc.sentences[i]).empty()) {
        throw DataError(where() + "doc_id " + std::to_string(doc.doc_id) + " sentence " +
                        std::to_string(i) + " is blank");
      }
    }
    if (auto it = index_.find(doc.doc_id); it != index_.end()) {
      const auto first = lines_[it->second];
      std::string msg = "duplicate doc_id " + std::to_string(doc.doc_id);
      if (line) msg += " on lines " + std::to_string(first) + " and " + std::to_string(line);
      throw DataError(msg);
    }
    index_.emplace(doc.doc_id, docs_.size());
    lines_.push_back(line);
    docs_.push_back(std::move(doc));
  }

  std::vector<AbstractDoc> docs_;
  std::vector<std::size_t> lines_;
  std::unordered_map<DocId, std::size_t> index_;
};

struct GoldRationale {
  std::vector<std::size_t> sentence_indices;  // 0-based, ascending, unique

  bool operator==(const GoldRationale&) const = default;
};

struct GoldEvidence {
  DocId doc_id = 0;
  Stance label = Stance::Supports;
  std::vector<GoldRationale> rationales;

  bool is_rationale_sentence(std::size_t idx) const {
    for (const auto& r : rationales) {
      if (std::binary_search(r.sentence_indices.begin(), r.sentence_indices.end(), idx)) return true;
    }
    return false;
  }

  // Union of all rationale sentences, ascending.
  std::vector<std::size_t> rationale_sentences() const {
    std::vector<std::size_t> out;
    for (const auto& r : rationales) out.insert(out.end(), r.sentence_indices.begin(), r.sentence_indices.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  bool operator==(const GoldEvidence&) const = default;
};

inline constexpr std::size_t kMaxRationalesPerDoc = 3;

struct Claim {
  ClaimId id = 0;
  std::string text;
  std::vector<GoldEvidence> evidence;
  std::vector<DocId> cited_doc_ids;

  const GoldEvidence* evidence_for(DocId doc) const {
    for (const auto& e : evidence) {
      if (e.doc_id == doc) return &e;
    }
    return nullptr;
  }

  // Claims with no gold evidence but with cited abstracts feed the
  // "no evidence & cited" rationale training regime.
  bool no_evidence_but_cited() const { return evidence.empty() && !cited_doc_ids.empty(); }

  std::optional<Stance> label() const {
    if (evidence.empty()) return std::nullopt;
    return evidence.front().label;
  }

  bool operator==(const Claim&) const = default;
};

struct DatasetSplit {
  std::vector<Claim> train;
  std::vector<Claim> validation;
  std::uint64_t seed = 0;
  double fraction = 0.75;
};

namespace detail {

inline std::string line_prefix(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

inline bool blank_line(const std::string& s) { return text::trim(s).empty(); }

template <typename Json>
const Json& require(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(where + "missing key \"" + key + "\"");
  return *it;
}

inline DocId parse_doc_key(const std::string& key, const std::string& where) {
  DocId v = 0;
  const auto* first = key.data();
  const auto* last = key.data() + key.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || key.empty()) {
    throw DataError(where + "evidence key \"" + key + "\" is not an integer doc_id");
  }
  return v;
}

}  // namespace detail

inline Corpus parse_corpus(std::istream& in, const std::string& source = "<corpus>") {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_line(line)) continue;
    const auto where = detail::line_prefix(source, lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + "record is not a JSON object");
    AbstractDoc doc;
    try {
      const auto& id = detail::require(rec, "doc_id", where);
      if (!id.is_number_integer()) throw DataError(where + "doc_id must be an integer");
      doc.doc_id = id.get<DocId>();
      const auto& title = detail::require(rec, "title", where);
      if (!title.is_string()) throw DataError(where + "title must be a string");
      doc.title = title.get<std::string>();
      const auto& abs = detail::require(rec, "abstract", where);
      if (!abs.is_array()) throw DataError(where + "abstract must be a list of strings");
      for (const auto& s : abs) {
        if (!s.is_string()) throw DataError(where + "abstract must be a list of strings");
        doc.sentences.push_back(s.get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
    try {
      corpus.add(std::move(doc), lineno);
    } catch (const DataError& e) {
      throw DataError(source + ": " + e.what());
    }
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path);
  return parse_corpus(in, path);
}

inline std::vector<Claim> parse_claims(std::istream& in, const Corpus& corpus,
                                       const std::string& source = "<claims>") {
  std::vector<Claim> claims;
  std::unordered_map<ClaimId, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_line(line)) continue;
    const auto where = detail::line_prefix(source, lineno);
    nlohmann::ordered_json rec;
    try {
      rec = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + "record is not a JSON object");

    Claim claim;
    const auto& id = detail::require(rec, "id", where);
    if (!id.is_number_integer()) throw DataError(where + "id must be an integer");
    claim.id = id.get<ClaimId>();
    const auto cwhere = where + "claim " + std::to_string(claim.id) + ": ";
    if (auto [it, fresh] = seen.emplace(claim.id, lineno); !fresh) {
      throw DataError(where + "duplicate claim id " + std::to_string(claim.id) + " (first on line " +
                      std::to_string(it->second) + ")");
    }
    const auto& txt = detail::require(rec, "claim", where);
    if (!txt.is_string() || text::trim(txt.get<std::string>()).empty()) {
      throw DataError(cwhere + "claim text must be a non-empty string");
    }
    claim.text = txt.get<std::string>();

    if (auto ev = rec.find("evidence"); ev != rec.end() && !ev->is_null()) {
      if (!ev->is_object()) throw DataError(cwhere + "evidence must be an object");
      for (const auto& [key, entries] : ev->items()) {
        GoldEvidence gold;
        gold.doc_id = detail::parse_doc_key(key, cwhere);
        const auto* doc = corpus.find(gold.doc_id);
        if (doc == nullptr) {
          throw DataError(cwhere + "evidence references unknown doc_id " + key);
        }
        if (!entries.is_array() || entries.empty()) {
          throw DataError(cwhere + "evidence for doc " + key + " must be a non-empty list");
        }
        if (entries.size() > kMaxRationalesPerDoc) {
          throw DataError(cwhere + "doc " + key + " has " + std::to_string(entries.size()) +
                          " rationales (max " + std::to_string(kMaxRationalesPerDoc) + ")");
        }
        std::optional<Stance> doc_label;
        for (const auto& entry : entries) {
          if (!entry.is_object()) throw DataError(cwhere + "evidence entry must be an object");
          const auto& lab = detail::require(entry, "label", cwhere);
          auto parsed = lab.is_string() ? parse_gold_label(lab.get<std::string>()) : std::nullopt;
          if (!parsed) throw DataError(cwhere + "unrecognized label " + lab.dump());
          if (doc_label && *doc_label != *parsed) {
            throw DataError(cwhere + "mixed labels within doc " + key);
          }
          doc_label = parsed;
          GoldRationale r;
          const auto& sents = detail::require(entry, "sentences", cwhere);
          if (!sents.is_array() || sents.empty()) {
            throw DataError(cwhere + "rationale for doc " + key + " must list at least one sentence");
          }
          for (const auto& s : sents) {
            if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
              throw DataError(cwhere + "rationale index " + s.dump() + " is not a non-negative integer");
            }
            const auto idx = s.get<std::uint64_t>();
            if (idx >= doc->n()) {
              throw DataError(cwhere + "rationale index " + std::to_string(idx) + " out of bounds for doc " +
                              key + " with " + std::to_string(doc->n()) + " sentences");
            }
            r.sentence_indices.push_back(static_cast<std::size_t>(idx));
          }
          std::sort(r.sentence_indices.begin(), r.sentence_indices.end());
          if (std::adjacent_find(r.sentence_indices.begin(), r.sentence_indices.end()) !=
              r.sentence_indices.end()) {
            throw DataError(cwhere + "duplicate sentence index in rationale for doc " + key);
          }
          gold.rationales.push_back(std::move(r));
        }
        gold.label = *doc_label;
        if (claim.evidence_for(gold.doc_id) != nullptr) {
          throw DataError(cwhere + "doc " + key + " listed twice in evidence");
        }
        if (!claim.evidence.empty() && claim.evidence.front().label != gold.label) {
          throw DataError(cwhere + "mixed labels across evidence documents (a claim has a single label)");
        }
        claim.evidence.push_back(std::move(gold));
      }
    }

    if (auto cited = rec.find("cited_doc_ids"); cited != rec.end() && !cited->is_null()) {
      if (!cited->is_array()) throw DataError(cwhere + "cited_doc_ids must be a list");
      for (const auto& c : *cited) {
        if (!c.is_number_integer()) throw DataError(cwhere + "cited doc id must be an integer");
        const auto d = c.get<DocId>();
        if (!corpus.contains(d)) {
          throw DataError(cwhere + "cited_doc_ids references unknown doc_id " + std::to_string(d));
        }
        claim.cited_doc_ids.push_back(d);
      }
    }
    claims.push_back(std::move(claim));
  }
  return claims;
}

inline std::vector<Claim> load_claims(const std::string& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open claims file " + path);
  return parse_claims(in, corpus, path);
}

inline std::string to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& d : corpus) {
    nlohmann::ordered_json rec;
    rec["doc_id"] = d.doc_id;
    rec["title"] = d.title;
    rec["abstract"] = d.sentences;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json claim_to_json(const Claim& c) {
  nlohmann::ordered_json rec;
  rec["id"] = c.id;
  rec["claim"] = c.text;
  auto ev = nlohmann::ordered_json::object();
  for (const auto& e : c.evidence) {
    auto entries = nlohmann::ordered_json::array();
    for (const auto& r : e.rationales) {
      nlohmann::ordered_json entry;
      entry["sentences"] = r.sentence_indices;
      entry["label"] = external_label(e.label);
      entries.push_back(std::move(entry));
    }
    ev[std::to_string(e.doc_id)] = std::move(entries);
  }
  rec["evidence"] = std::move(ev);
  rec["cited_doc_ids"] = c.cited_doc_ids;
  return rec;
}

inline std::string to_jsonl(const std::vector<Claim>& claims) {
  std::string out;
  for (const auto& c : claims) {
    out += claim_to_json(c).dump();
    out += '\n';
  }
  return out;
}

// Deterministic Fisher-Yates shuffle. Uses raw mt19937_64 output with
// rejection sampling so results do not depend on the standard library's
// distribution implementations.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = 0;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(items[i - 1], items[static_cast<std::size_t>(draw % bound)]);
  }
}

inline DatasetSplit split_claims(std::vector<Claim> claims, double fraction, std::uint64_t seed) {
  if (claims.empty()) throw DataError("split_claims: empty claim list");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw UsageError("split_claims: fraction must lie strictly between 0 and 1");
  }
  seeded_shuffle(claims, seed);
  const auto n_train = std::min(
      claims.size(), static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(claims.size()) - 1e-9)));
  DatasetSplit split;
  split.seed = seed;
  split.fraction = fraction;
  split.train.assign(std::make_move_iterator(claims.begin()),
                     std::make_move_iterator(claims.begin() + static_cast<std::ptrdiff_t>(n_train)));
  split.validation.assign(std::make_move_iterator(claims.begin() + static_cast<std::ptrdiff_t>(n_train)),
                          std::make_move_iterator(claims.end()));
  return split;
}

}  // namespace rerrfact
