#pragma once
// Reference implementations used only by tests. They share data types with
// the library but none of its logic.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rerrfact/corpus.hpp"
#include "rerrfact/predictions.hpp"

namespace oracle {

using rerrfact::Claim;
using rerrfact::ClaimPrediction;
using rerrfact::Corpus;
using rerrfact::DocId;
using rerrfact::Stance;

// ---- metrics ---------------------------------------------------------------

struct Counts {
  long correct = 0, predicted = 0, gold = 0;
};

// precision, recall, f1 for selection_only, selection_label, label_only,
// label_rationale, in that order.
struct Metrics {
  std::array<Counts, 4> counts;
  std::array<double, 12> values{};
};

inline Metrics brute_force_evaluate(const std::vector<Claim>& gold, const std::vector<ClaimPrediction>& preds,
                                    std::size_t truncation = 3) {
  using Key = std::tuple<long long, long long>;
  std::map<Key, const rerrfact::GoldEvidence*> gold_ev;
  std::set<std::tuple<long long, long long, std::size_t>> gold_sentences;
  for (const auto& c : gold) {
    for (const auto& e : c.evidence) {
      gold_ev[{c.id, e.doc_id}] = &e;
      for (const auto& r : e.rationales) {
        for (auto s : r.sentence_indices) gold_sentences.insert({c.id, e.doc_id, s});
      }
    }
  }

  Metrics m;
  auto& sel = m.counts[0];
  auto& sel_lab = m.counts[1];
  auto& lab = m.counts[2];
  auto& lab_rat = m.counts[3];
  sel.gold = sel_lab.gold = static_cast<long>(gold_sentences.size());
  lab.gold = lab_rat.gold = static_cast<long>(gold_ev.size());

  for (const auto& p : preds) {
    for (const auto& pe : p.evidence) {
      const auto it = gold_ev.find({p.claim_id, pe.doc_id});
      const rerrfact::GoldEvidence* ev = it == gold_ev.end() ? nullptr : it->second;

      // One abstract-level item.
      lab.predicted += 1;
      lab_rat.predicted += 1;
      const bool label_ok = ev != nullptr && ev->label == pe.label;
      if (label_ok) {
        lab.correct += 1;
        bool any_inside = false;
        for (const auto& r : ev->rationales) {
          bool inside = true;
          for (auto g : r.sentence_indices) {
            bool found = false;
            for (std::size_t pos = 0; pos < pe.sentences.size() && pos < truncation; ++pos) {
              if (pe.sentences[pos] == g) found = true;
            }
            if (!found) inside = false;
          }
          if (inside) any_inside = true;
        }
        if (any_inside) lab_rat.correct += 1;
      }

      // One sentence-level item per predicted sentence.
      for (auto s : pe.sentences) {
        sel.predicted += 1;
        sel_lab.predicted += 1;
        if (ev == nullptr) continue;
        bool credited = false;
        for (const auto& r : ev->rationales) {
          bool contains_s = false;
          bool all_predicted = true;
          for (auto g : r.sentence_indices) {
            if (g == s) contains_s = true;
            if (std::find(pe.sentences.begin(), pe.sentences.end(), g) == pe.sentences.end()) all_predicted = false;
          }
          if (contains_s && all_predicted) credited = true;
        }
        if (credited) {
          sel.correct += 1;
          if (label_ok) sel_lab.correct += 1;
        }
      }
    }
  }

  for (std::size_t f = 0; f < 4; ++f) {
    const auto& c = m.counts[f];
    const double p = c.predicted == 0 ? 0.0 : static_cast<double>(c.correct) / static_cast<double>(c.predicted);
    const double r = c.gold == 0 ? 0.0 : static_cast<double>(c.correct) / static_cast<double>(c.gold);
    m.values[3 * f] = p;
    m.values[3 * f + 1] = r;
    m.values[3 * f + 2] = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  return m;
}

// ---- random mini datasets ---------------------------------------------------

struct MiniDataset {
  Corpus corpus;
  std::vector<Claim> claims;
  std::vector<ClaimPrediction> predictions;
};

template <typename Rng>
std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Up to 5 claims, 6 docs, 6 sentences per doc; random gold and predictions.
template <typename Rng>
MiniDataset random_mini_dataset(Rng& rng) {
  MiniDataset ds;
  const auto n_docs = uniform(rng, 1, 6);
  std::vector<rerrfact::AbstractDoc> docs;
  for (std::size_t d = 0; d < n_docs; ++d) {
    rerrfact::AbstractDoc doc;
    doc.doc_id = static_cast<DocId>(10 + d);
    doc.title = "doc " + std::to_string(d);
    const auto n = uniform(rng, 1, 6);
    for (std::size_t i = 0; i < n; ++i) doc.sentences.push_back("sentence " + std::to_string(i));
    docs.push_back(doc);
  }
  ds.corpus = Corpus::from_docs(docs);

  const auto n_claims = uniform(rng, 1, 5);
  for (std::size_t c = 0; c < n_claims; ++c) {
    Claim claim;
    claim.id = static_cast<rerrfact::ClaimId>(c + 1);
    claim.text = "claim " + std::to_string(c);
    const Stance label = uniform(rng, 0, 1) ? Stance::Supports : Stance::Refutes;
    for (const auto& doc : docs) {
      if (uniform(rng, 0, 2) != 0) continue;
      rerrfact::GoldEvidence ev;
      ev.doc_id = doc.doc_id;
      ev.label = label;
      const auto n_rat = uniform(rng, 1, 3);
      for (std::size_t r = 0; r < n_rat; ++r) {
        std::set<std::size_t> idx;
        const auto size = uniform(rng, 1, std::min<std::size_t>(3, doc.n()));
        while (idx.size() < size) idx.insert(uniform(rng, 0, doc.n() - 1));
        ev.rationales.push_back({std::vector<std::size_t>(idx.begin(), idx.end())});
      }
      claim.evidence.push_back(ev);
    }
    ds.claims.push_back(claim);
  }

  for (const auto& claim : ds.claims) {
    if (uniform(rng, 0, 4) == 0) continue;  // claim left without a prediction
    ClaimPrediction p;
    p.claim_id = claim.id;
    for (const auto& doc : docs) {
      if (uniform(rng, 0, 1) == 0) continue;
      rerrfact::PredictedEvidence pe;
      pe.doc_id = doc.doc_id;
      pe.label = uniform(rng, 0, 1) ? Stance::Supports : Stance::Refutes;
      std::vector<std::size_t> all(doc.n());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(uniform(rng, 1, doc.n()));
      pe.sentences = all;
      p.evidence.push_back(pe);
    }
    ds.predictions.push_back(p);
  }
  return ds;
}

// ---- dense TF-IDF cosine ----------------------------------------------------

// Texts are lowercase words separated by single spaces.
inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

struct DenseRanked {
  DocId doc_id;
  double score;
};

// Full ranking of every doc by cosine of raw-tf * (ln((1+N)/(1+df)) + 1)
// vectors, score descending then doc_id ascending.
inline std::vector<DenseRanked> dense_cosine_rank(const std::vector<std::pair<DocId, std::string>>& docs,
                                                  const std::string& query) {
  std::vector<std::string> vocab;
  std::vector<std::vector<std::string>> toks;
  for (const auto& [id, text] : docs) {
    toks.push_back(split_words(text));
    vocab.insert(vocab.end(), toks.back().begin(), toks.back().end());
  }
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  const auto V = vocab.size();
  const auto N = docs.size();
  const auto pos = [&](const std::string& w) -> long {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), w);
    return (it != vocab.end() && *it == w) ? static_cast<long>(it - vocab.begin()) : -1;
  };

  std::vector<std::vector<double>> tf(N, std::vector<double>(V, 0.0));
  for (std::size_t d = 0; d < N; ++d) {
    for (const auto& w : toks[d]) tf[d][static_cast<std::size_t>(pos(w))] += 1.0;
  }
  std::vector<double> idf(V, 0.0);
  for (std::size_t t = 0; t < V; ++t) {
    double df = 0;
    for (std::size_t d = 0; d < N; ++d) df += tf[d][t] > 0 ? 1 : 0;
    idf[t] = std::log((1.0 + static_cast<double>(N)) / (1.0 + df)) + 1.0;
  }
  std::vector<double> q(V, 0.0);
  for (const auto& w : split_words(query)) {
    const auto p = pos(w);
    if (p >= 0) q[static_cast<std::size_t>(p)] += 1.0;
  }
  const auto cosine = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t t = 0; t < V; ++t) {
      dot += a[t] * idf[t] * b[t] * idf[t];
      na += a[t] * idf[t] * a[t] * idf[t];
      nb += b[t] * idf[t] * b[t] * idf[t];
    }
    return (na == 0 || nb == 0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
  };

  std::vector<DenseRanked> out;
  for (std::size_t d = 0; d < N; ++d) out.push_back({docs[d].first, cosine(tf[d], q)});
  std::sort(out.begin(), out.end(), [](const DenseRanked& a, const DenseRanked& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return out;
}

struct RandomCorpus {
  Corpus corpus;
  std::vector<std::pair<DocId, std::string>> texts;  // title + abstract, space-joined
  std::vector<std::string> queries;
};

template <typename Rng>
std::string random_words(Rng& rng, std::size_t vocab, std::size_t lo, std::size_t hi) {
  std::string s;
  const auto n = uniform(rng, lo, hi);
  for (std::size_t i = 0; i < n; ++i) {
    if (!s.empty()) s += ' ';
    s += "w" + std::to_string(uniform(rng, 0, vocab - 1));
  }
  return s;
}

// Up to max_docs docs over a small vocabulary; some docs are exact copies so
// that score ties occur. Queries may contain out-of-vocabulary words.
template <typename Rng>
RandomCorpus random_corpus(Rng& rng, std::size_t max_docs = 200) {
  RandomCorpus rc;
  const auto n_docs = uniform(rng, 1, max_docs);
  const auto vocab = uniform(rng, 3, 60);
  std::vector<rerrfact::AbstractDoc> docs;
  std::vector<DocId> ids;
  for (std::size_t d = 0; d < n_docs; ++d) ids.push_back(static_cast<DocId>(d * 3 + uniform(rng, 0, 2)));
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t d = 0; d < n_docs; ++d) {
    rerrfact::AbstractDoc doc;
    doc.doc_id = ids[d];
    if (d > 0 && uniform(rng, 0, 9) == 0) {
      doc.title = docs[d - 1].title;
      doc.sentences = docs[d - 1].sentences;
    } else {
      doc.title = random_words(rng, vocab, 1, 4);
      const auto n = uniform(rng, 1, 5);
      for (std::size_t i = 0; i < n; ++i) doc.sentences.push_back(random_words(rng, vocab, 1, 8));
    }
    std::string text = doc.title;
    for (const auto& s : doc.sentences) text += " " + s;
    rc.texts.push_back({doc.doc_id, text});
    docs.push_back(doc);
  }
  rc.corpus = Corpus::from_docs(docs);
  for (int q = 0; q < 5; ++q) rc.queries.push_back(random_words(rng, vocab + 5, 1, 6));
  return rc;
}

}  // namespace oracle
