#pragma once
// TF-IDF candidate retrieval over the abstract corpus.
//
// Weighting: tf = raw count, idf = ln((1 + N) / (1 + df)) + 1, vectors are
// L2-normalized and similarity is their dot product. Term ids follow the
// lexicographic order of terms, so every accumulation runs in a fixed order
// and results are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"
#include "rerrfact/text.hpp"

namespace rerrfact {

enum class IndexFields { Title, TitleAndAbstract };

inline std::string_view to_string(IndexFields f) {
  return f == IndexFields::Title ? "title" : "title+abstract";
}

inline IndexFields parse_index_fields(std::string_view s) {
  if (s == "title") return IndexFields::Title;
  if (s == "title+abstract") return IndexFields::TitleAndAbstract;
  throw UsageError("unknown retrieval.fields value '" + std::string(s) + "' (expected title|title+abstract)");
}

using TermId = std::uint32_t;

struct SparseEntry {
  TermId term = 0;
  double weight = 0.0;
};
using SparseVector = std::vector<SparseEntry>;  // sorted by term

struct RankedAbstract {
  DocId doc_id = 0;
  double score = 0.0;

  bool operator==(const RankedAbstract&) const = default;
};

// Orders by score descending, then doc_id ascending.
inline bool rank_before(const RankedAbstract& a, const RankedAbstract& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

inline constexpr std::size_t kDefaultTopK = 30;

class TfIdfIndex {
 public:
  static constexpr int kFormatVersion = 1;

  static TfIdfIndex build(const Corpus& corpus, IndexFields fields = IndexFields::TitleAndAbstract) {
    if (corpus.empty()) throw DataError("cannot build a TF-IDF index over an empty corpus");
    TfIdfIndex idx;
    idx.fields_ = fields;

    std::vector<std::map<std::string, std::uint32_t>> counts;
    counts.reserve(corpus.size());
    std::map<std::string, std::uint32_t> df;
    for (const auto& doc : corpus) {
      std::map<std::string, std::uint32_t> tf;
      const auto feed = [&tf](std::string_view s) {
        for (auto& t : text::tokenize(s)) ++tf[std::move(t)];
      };
      feed(doc.title);
      if (fields == IndexFields::TitleAndAbstract) {
        for (const auto& s : doc.sentences) feed(s);
      }
      for (const auto& [term, _] : tf) ++df[term];
      idx.doc_ids_.push_back(doc.doc_id);
      counts.push_back(std::move(tf));
    }

    idx.terms_.reserve(df.size());
    idx.df_.reserve(df.size());
    for (const auto& [term, n] : df) {
      idx.term_ids_.emplace(term, static_cast<TermId>(idx.terms_.size()));
      idx.terms_.push_back(term);
      idx.df_.push_back(n);
    }
    idx.compute_idf();

    idx.doc_vectors_.reserve(counts.size());
    for (const auto& tf : counts) {
      SparseVector v;
      v.reserve(tf.size());
      for (const auto& [term, n] : tf) {
        const TermId id = idx.term_ids_.at(term);
        v.push_back({id, static_cast<double>(n) * idx.idf_[id]});
      }
      normalize(v);
      idx.doc_vectors_.push_back(std::move(v));
    }
    idx.build_postings();
    return idx;
  }

  std::size_t doc_count() const { return doc_ids_.size(); }
  std::size_t vocabulary_size() const { return terms_.size(); }
  IndexFields fields() const { return fields_; }
  const std::vector<DocId>& doc_ids() const { return doc_ids_; }
  const std::vector<std::string>& terms() const { return terms_; }

  std::optional<TermId> term_id(std::string_view term) const {
    auto it = term_ids_.find(std::string(term));
    if (it == term_ids_.end()) return std::nullopt;
    return it->second;
  }

  std::uint32_t document_frequency(TermId t) const { return df_.at(t); }
  double idf(TermId t) const { return idf_.at(t); }

  const SparseVector& doc_vector(DocId id) const {
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
      if (doc_ids_[i] == id) return doc_vectors_[i];
    }
    throw DataError("doc_id " + std::to_string(id) + " not in index");
  }

  // Query vector for arbitrary text using this index's IDF table.
  // Out-of-vocabulary terms are dropped.
  SparseVector query_vector(std::string_view query) const {
    std::map<TermId, std::uint32_t> tf;
    for (const auto& t : text::tokenize(query)) {
      if (auto it = term_ids_.find(t); it != term_ids_.end()) ++tf[it->second];
    }
    SparseVector v;
    v.reserve(tf.size());
    for (const auto& [id, n] : tf) v.push_back({id, static_cast<double>(n) * idf_[id]});
    normalize(v);
    return v;
  }

  // Cosine similarity of the query against every indexed doc, in index order.
  std::vector<double> similarities(std::string_view query) const {
    std::vector<double> acc(doc_ids_.size(), 0.0);
    for (const auto& [term, qw] : query_vector(query)) {
      for (const auto& [doc, dw] : postings_[term]) acc[doc] += qw * dw;
    }
    for (auto& s : acc) s = std::clamp(s, 0.0, 1.0);
    return acc;
  }

  std::vector<RankedAbstract> top_k(std::string_view claim_text, std::size_t k = kDefaultTopK) const {
    if (k == 0) throw UsageError("top_k: k must be at least 1");
    const auto sims = similarities(claim_text);
    std::vector<RankedAbstract> ranked;
    ranked.reserve(sims.size());
    for (std::size_t i = 0; i < sims.size(); ++i) ranked.push_back({doc_ids_[i], sims[i]});
    const auto take = std::min(k, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                      rank_before);
    ranked.resize(take);
    return ranked;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "rerrfact-tfidf";
    j["version"] = kFormatVersion;
    j["fields"] = to_string(fields_);
    j["doc_count"] = doc_ids_.size();
    j["terms"] = terms_;
    j["df"] = df_;
    auto docs = nlohmann::json::array();
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
      std::vector<TermId> ids;
      std::vector<double> ws;
      for (const auto& [t, w] : doc_vectors_[i]) {
        ids.push_back(t);
        ws.push_back(w);
      }
      docs.push_back({{"doc_id", doc_ids_[i]}, {"terms", ids}, {"weights", ws}});
    }
    j["docs"] = std::move(docs);
    return j;
  }

  static TfIdfIndex from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "rerrfact-tfidf") throw DataError("not a TF-IDF index file");
      if (j.at("version").get<int>() != kFormatVersion) {
        throw DataError("unsupported TF-IDF index version " + j.at("version").dump());
      }
      TfIdfIndex idx;
      idx.fields_ = parse_index_fields(j.at("fields").get<std::string>());
      idx.terms_ = j.at("terms").get<std::vector<std::string>>();
      idx.df_ = j.at("df").get<std::vector<std::uint32_t>>();
      if (idx.df_.size() != idx.terms_.size()) throw DataError("index term/df length mismatch");
      for (std::size_t i = 0; i < idx.terms_.size(); ++i) {
        idx.term_ids_.emplace(idx.terms_[i], static_cast<TermId>(i));
      }
      for (const auto& d : j.at("docs")) {
        idx.doc_ids_.push_back(d.at("doc_id").get<DocId>());
        const auto ids = d.at("terms").get<std::vector<TermId>>();
        const auto ws = d.at("weights").get<std::vector<double>>();
        if (ids.size() != ws.size()) throw DataError("index doc vector length mismatch");
        SparseVector v;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (ids[i] >= idx.terms_.size()) throw DataError("index term id out of range");
          v.push_back({ids[i], ws[i]});
        }
        idx.doc_vectors_.push_back(std::move(v));
      }
      if (idx.doc_ids_.size() != j.at("doc_count").get<std::size_t>()) {
        throw DataError("index doc_count mismatch");
      }
      idx.compute_idf();
      idx.build_postings();
      return idx;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed TF-IDF index: ") + e.what());
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write index file " + path);
    out << to_json().dump() << '\n';
  }

  static TfIdfIndex load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open index file " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed index file " + path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  static void normalize(SparseVector& v) {
    double sq = 0.0;
    for (const auto& e : v) sq += e.weight * e.weight;
    if (sq == 0.0) {
      v.clear();
      return;
    }
    const double norm = std::sqrt(sq);
    for (auto& e : v) e.weight /= norm;
  }

  void compute_idf() {
    const double n = static_cast<double>(doc_ids_.empty() ? 0 : doc_ids_.size());
    idf_.resize(df_.size());
    for (std::size_t i = 0; i < df_.size(); ++i) {
      idf_[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df_[i]))) + 1.0;
    }
  }

  void build_postings() {
    postings_.assign(terms_.size(), {});
    for (std::size_t d = 0; d < doc_vectors_.size(); ++d) {
      for (const auto& [t, w] : doc_vectors_[d]) postings_[t].push_back({static_cast<std::uint32_t>(d), w});
    }
  }

  struct Posting {
    std::uint32_t doc = 0;
    double weight = 0.0;
  };

  IndexFields fields_ = IndexFields::TitleAndAbstract;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, TermId> term_ids_;
  std::vector<std::uint32_t> df_;
  std::vector<double> idf_;
  std::vector<DocId> doc_ids_;
  std::vector<SparseVector> doc_vectors_;
  std::vector<std::vector<Posting>> postings_;
};

inline TfIdfIndex build_index(const Corpus& corpus, IndexFields fields = IndexFields::TitleAndAbstract) {
  return TfIdfIndex::build(corpus, fields);
}

inline std::vector<RankedAbstract> top_k(const TfIdfIndex& index, std::string_view claim_text,
                                         std::size_t k = kDefaultTopK) {
  return index.top_k(claim_text, k);
}

}  // namespace rerrfact
