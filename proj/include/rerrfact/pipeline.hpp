#pragma once
// Three-stage verification pipeline:
//   1. abstract retrieval   TF-IDF top-k candidates, kept if the abstract
//                           classifier accepts the claim-conditioned context
//   2. rationale selection  every sentence of a retrieved abstract scored
//                           independently against the claim
//   3. stance prediction    NOINFO gate, then SUPPORTS vs REFUTES
// plus the training-set builders for each stage.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rerrfact/classifier.hpp"
#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"
#include "rerrfact/predictions.hpp"
#include "rerrfact/representation.hpp"
#include "rerrfact/retrieval.hpp"
#include "rerrfact/scorer.hpp"

namespace rerrfact {

struct ScoredDoc {
  DocId doc_id = 0;
  double tfidf = 0.0;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

struct ScoredSentence {
  std::size_t index = 0;
  double score = 0.0;

  bool operator==(const ScoredSentence&) const = default;
};

struct RetrievalOptions {
  std::size_t k = kDefaultTopK;
  double threshold = 0.5;
  std::size_t max_abstracts = 0;  // 0 keeps every accepted abstract
};

namespace detail {

// Re-throws the in-flight exception with a context prefix, keeping its
// category so the CLI can still map it to the right exit code.
[[noreturn]] inline void rethrow_with_context(const std::string& ctx) {
  try {
    throw;
  } catch (const ScorerError& e) {
    throw ScorerError(ctx + e.what());
  } catch (const UsageError& e) {
    throw UsageError(ctx + e.what());
  } catch (const DataError& e) {
    throw DataError(ctx + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(ctx + e.what());
  }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of the
// lowest failing index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  const auto body = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min(workers, n);
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::unordered_set<DocId> gold_docs(const Claim& c) {
  std::unordered_set<DocId> s;
  for (const auto& e : c.evidence) s.insert(e.doc_id);
  return s;
}

// Highest-ranked TF-IDF candidates that are not gold evidence for the claim.
inline std::vector<DocId> false_candidates(const Claim& claim, const TfIdfIndex& index, std::size_t k,
                                           std::size_t limit) {
  const auto gold = gold_docs(claim);
  std::vector<DocId> out;
  for (const auto& r : index.top_k(claim.text, k)) {
    if (out.size() == limit) break;
    if (!gold.count(r.doc_id)) out.push_back(r.doc_id);
  }
  return out;
}

}  // namespace detail

// Stage 1 training pairs: every gold-evidence abstract as a positive (even
// when TF-IDF misses it) and non-gold top-k candidates as negatives.
inline std::vector<LabeledPair> build_abstract_training_set(const std::vector<Claim>& claims, const Corpus& corpus,
                                                            const TfIdfIndex& index, const ReprStrategy& strategy,
                                                            std::size_t k = kDefaultTopK,
                                                            std::optional<std::size_t> neg_per_claim = std::nullopt) {
  std::vector<LabeledPair> pairs;
  for (const auto& claim : claims) {
    for (const auto& ev : claim.evidence) {
      pairs.push_back({claim.text, build_context(corpus.at(ev.doc_id), strategy), 1});
    }
    const auto negatives = detail::false_candidates(claim, index, k, neg_per_claim.value_or(k));
    for (auto d : negatives) pairs.push_back({claim.text, build_context(corpus.at(d), strategy), 0});
  }
  return pairs;
}

// Top-k TF-IDF candidates accepted by the abstract scorer, ordered by
// classifier score descending (doc_id ascending on ties).
inline std::vector<ScoredDoc> retrieve_abstracts(std::string_view claim_text, const Corpus& corpus,
                                                 const TfIdfIndex& index, PairScorer& abstract_scorer,
                                                 const ReprStrategy& strategy, const RetrievalOptions& opts = {},
                                                 std::vector<RankedAbstract>* candidates_out = nullptr) {
  const auto candidates = index.top_k(claim_text, opts.k);
  if (candidates_out != nullptr) *candidates_out = candidates;
  std::vector<TextPair> batch;
  batch.reserve(candidates.size());
  for (const auto& c : candidates) batch.push_back({std::string(claim_text), build_context(corpus.at(c.doc_id), strategy)});
  const auto scores = batch.empty() ? std::vector<double>{} : abstract_scorer.score(batch);
  std::vector<ScoredDoc> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (decide(scores[i], opts.threshold)) kept.push_back({candidates[i].doc_id, candidates[i].score, scores[i]});
  }
  std::stable_sort(kept.begin(), kept.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (opts.max_abstracts > 0 && kept.size() > opts.max_abstracts) kept.resize(opts.max_abstracts);
  return kept;
}

enum class RationaleMode { Oracle, OraclePlusCited, OraclePlusCitedPlusTfidfNeg, LooseCoupling };

inline std::string_view to_string(RationaleMode m) {
  switch (m) {
    case RationaleMode::Oracle: return "oracle";
    case RationaleMode::OraclePlusCited: return "oracle+cited";
    case RationaleMode::OraclePlusCitedPlusTfidfNeg: return "oracle+cited+tfidf";
    case RationaleMode::LooseCoupling: return "loose_coupling";
  }
  return "loose_coupling";
}

inline RationaleMode parse_rationale_mode(std::string_view s) {
  if (s == "oracle") return RationaleMode::Oracle;
  if (s == "oracle+cited") return RationaleMode::OraclePlusCited;
  if (s == "oracle+cited+tfidf") return RationaleMode::OraclePlusCitedPlusTfidfNeg;
  if (s == "loose_coupling" || s == "loose-coupling") return RationaleMode::LooseCoupling;
  throw UsageError("unknown rationale mode '" + std::string(s) +
                   "' (expected oracle|oracle+cited|oracle+cited+tfidf|loose_coupling)");
}

struct RationaleSetOptions {
  RetrievalOptions retrieval;
  ReprStrategy strategy = ReprStrategy::reduced();
  PairScorer* abstract_scorer = nullptr;  // required for LooseCoupling
  std::size_t false_retrieval_docs = 3;
};

// Stage 2 training pairs: one (claim, sentence) pair per sentence of each
// selected abstract; positive iff the sentence is in a gold rationale.
inline std::vector<LabeledPair> build_rationale_training_set(RationaleMode mode, const std::vector<Claim>& claims,
                                                             const Corpus& corpus, const TfIdfIndex& index,
                                                             const RationaleSetOptions& opts = {}) {
  if (mode == RationaleMode::LooseCoupling && opts.abstract_scorer == nullptr) {
    throw UsageError("loose-coupling rationale training needs a trained abstract model");
  }
  std::vector<LabeledPair> pairs;
  const auto add_doc = [&](const Claim& claim, DocId doc_id) {
    const auto& doc = corpus.at(doc_id);
    const auto* ev = claim.evidence_for(doc_id);
    for (std::size_t i = 0; i < doc.n(); ++i) {
      pairs.push_back({claim.text, doc.sentences[i], (ev != nullptr && ev->is_rationale_sentence(i)) ? 1 : 0});
    }
  };

  for (const auto& claim : claims) {
    if (mode == RationaleMode::LooseCoupling) {
      for (const auto& d :
           retrieve_abstracts(claim.text, corpus, index, *opts.abstract_scorer, opts.strategy, opts.retrieval)) {
        add_doc(claim, d.doc_id);
      }
      continue;
    }
    for (const auto& ev : claim.evidence) add_doc(claim, ev.doc_id);
    if (mode == RationaleMode::OraclePlusCited || mode == RationaleMode::OraclePlusCitedPlusTfidfNeg) {
      if (claim.no_evidence_but_cited()) {
        for (auto d : claim.cited_doc_ids) add_doc(claim, d);
      }
    }
    if (mode == RationaleMode::OraclePlusCitedPlusTfidfNeg) {
      for (auto d : detail::false_candidates(claim, index, opts.retrieval.k, opts.false_retrieval_docs)) {
        add_doc(claim, d);
      }
    }
  }
  return pairs;
}

// Sentences scoring at or above the threshold, ordered by score descending
// (document order on ties), optionally capped.
inline std::vector<ScoredSentence> select_rationales(std::string_view claim_text, const AbstractDoc& doc,
                                                     PairScorer& rationale_scorer, double threshold = 0.5,
                                                     std::size_t max_rationales = 0) {
  std::vector<TextPair> batch;
  batch.reserve(doc.n());
  for (const auto& s : doc.sentences) batch.push_back({std::string(claim_text), s});
  const auto scores = rationale_scorer.score(batch);
  std::vector<ScoredSentence> kept;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (decide(scores[i], threshold)) kept.push_back({i, scores[i]});
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const ScoredSentence& a, const ScoredSentence& b) { return a.score > b.score; });
  if (max_rationales > 0 && kept.size() > max_rationales) kept.resize(max_rationales);
  return kept;
}

// Selected sentences in ascending document order, joined by one space.
inline std::string stance_context(const AbstractDoc& doc, std::vector<std::size_t> indices) {
  if (indices.empty()) throw UsageError("stance prediction needs at least one rationale sentence");
  std::sort(indices.begin(), indices.end());
  return join_sentences(doc, indices);
}

struct StanceDecision {
  Stance label = Stance::NoInfo;
  double has_info_score = std::numeric_limits<double>::quiet_NaN();
  double supports_score = std::numeric_limits<double>::quiet_NaN();  // NaN when the gate fired
};

// Gate then direction: has-info below its threshold -> NOINFO; otherwise the
// support score decides SUPPORTS vs REFUTES.
inline Stance two_step_label(double has_info_score, double supports_score, double noinfo_threshold = 0.5,
                             double sr_threshold = 0.5) {
  if (!decide(has_info_score, noinfo_threshold)) return Stance::NoInfo;
  return decide(supports_score, sr_threshold) ? Stance::Supports : Stance::Refutes;
}

inline StanceDecision predict_stance(std::string_view claim_text, const AbstractDoc& doc,
                                     const std::vector<std::size_t>& sentence_indices, PairScorer& noinfo_scorer,
                                     PairScorer& sr_scorer, double noinfo_threshold = 0.5,
                                     double sr_threshold = 0.5) {
  const std::vector<TextPair> batch{{std::string(claim_text), stance_context(doc, sentence_indices)}};
  StanceDecision d;
  d.has_info_score = noinfo_scorer.score(batch).at(0);
  if (!decide(d.has_info_score, noinfo_threshold)) {
    d.label = Stance::NoInfo;
    return d;
  }
  d.supports_score = sr_scorer.score(batch).at(0);
  d.label = two_step_label(d.has_info_score, d.supports_score, noinfo_threshold, sr_threshold);
  return d;
}

// Argmax over (NOINFO, REFUTES, SUPPORTS); the earlier class wins ties.
inline Stance argmax_stance(const std::vector<double>& probs) {
  if (probs.size() != 3) throw UsageError("argmax_stance expects a 3-way probability vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < 3; ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return static_cast<Stance>(best);
}

inline Stance predict_stance_multiclass(std::string_view claim_text, const AbstractDoc& doc,
                                        const std::vector<std::size_t>& sentence_indices,
                                        const ClassifierModel& multiclass_model) {
  if (!multiclass_model.multiclass()) throw UsageError("predict_stance_multiclass needs a 3-way model");
  return argmax_stance(multiclass_model.predict_proba(claim_text, stance_context(doc, sentence_indices)));
}

enum class StanceSource { Gold, Predicted };

inline std::string_view to_string(StanceSource s) { return s == StanceSource::Gold ? "gold" : "predicted"; }

inline StanceSource parse_stance_source(std::string_view s) {
  if (s == "gold") return StanceSource::Gold;
  if (s == "predicted") return StanceSource::Predicted;
  throw UsageError("unknown stance negative source '" + std::string(s) + "' (expected gold|predicted)");
}

struct StanceSetOptions {
  std::size_t k = kDefaultTopK;
  std::size_t noinfo_docs = 3;  // non-gold TF-IDF candidates per claim used as NOINFO examples
  StanceSource source = StanceSource::Gold;
  PairScorer* rationale_scorer = nullptr;  // required for StanceSource::Predicted
  double rationale_threshold = 0.5;
  std::size_t max_rationales = 0;
};

struct StanceTrainingSets {
  std::vector<LabeledPair> noinfo;      // 1 = has info
  std::vector<LabeledPair> sr;          // 1 = SUPPORTS, 0 = REFUTES
  std::vector<LabeledPair> multiclass;  // Stance values
};

// Positives come from gold evidence (context = all gold rationale sentences of
// the abstract). NOINFO examples come from the top non-gold TF-IDF candidates
// and from cited abstracts of claims without evidence; their context is the
// reduced-position sentences (source = gold) or the rationale model's
// selection (source = predicted, abstracts with no selection are skipped).
inline StanceTrainingSets build_stance_training_sets(const std::vector<Claim>& claims, const Corpus& corpus,
                                                     const TfIdfIndex& index, const StanceSetOptions& opts = {}) {
  if (opts.source == StanceSource::Predicted && opts.rationale_scorer == nullptr) {
    throw UsageError("stance training from predicted rationales needs a rationale model");
  }
  StanceTrainingSets sets;
  for (const auto& claim : claims) {
    for (const auto& ev : claim.evidence) {
      const auto ctx = stance_context(corpus.at(ev.doc_id), ev.rationale_sentences());
      sets.noinfo.push_back({claim.text, ctx, 1});
      sets.sr.push_back({claim.text, ctx, ev.label == Stance::Supports ? 1 : 0});
      sets.multiclass.push_back({claim.text, ctx, static_cast<int>(ev.label)});
    }
    auto negatives = detail::false_candidates(claim, index, opts.k, opts.noinfo_docs);
    if (claim.no_evidence_but_cited()) {
      for (auto d : claim.cited_doc_ids) {
        if (std::find(negatives.begin(), negatives.end(), d) == negatives.end()) negatives.push_back(d);
      }
    }
    for (auto d : negatives) {
      const auto& doc = corpus.at(d);
      std::vector<std::size_t> idx;
      if (opts.source == StanceSource::Gold) {
        idx = reduced_indices(doc.n());
      } else {
        for (const auto& s :
             select_rationales(claim.text, doc, *opts.rationale_scorer, opts.rationale_threshold, opts.max_rationales)) {
          idx.push_back(s.index);
        }
        if (idx.empty()) continue;
      }
      const auto ctx = stance_context(doc, idx);
      sets.noinfo.push_back({claim.text, ctx, 0});
      sets.multiclass.push_back({claim.text, ctx, static_cast<int>(Stance::NoInfo)});
    }
  }
  return sets;
}

enum class StanceMode { TwoStep, Multiclass };

inline std::string_view to_string(StanceMode m) { return m == StanceMode::TwoStep ? "two_step" : "multiclass"; }

inline StanceMode parse_stance_mode(std::string_view s) {
  if (s == "two_step" || s == "two-step") return StanceMode::TwoStep;
  if (s == "multiclass") return StanceMode::Multiclass;
  throw UsageError("unknown stance mode '" + std::string(s) + "' (expected two_step|multiclass)");
}

struct PipelineModels {
  PairScorer* abstract = nullptr;
  PairScorer* rationale = nullptr;
  PairScorer* noinfo = nullptr;
  PairScorer* sr = nullptr;
  const ClassifierModel* multiclass = nullptr;
};

struct PipelineOptions {
  RetrievalOptions retrieval;
  ReprStrategy strategy = ReprStrategy::reduced();
  double rationale_threshold = 0.5;
  std::size_t max_rationales = 0;
  double noinfo_threshold = 0.5;
  double sr_threshold = 0.5;
  StanceMode stance_mode = StanceMode::TwoStep;
  std::size_t workers = 1;
};

struct DocTrace {
  DocId doc_id = 0;
  std::vector<ScoredSentence> rationales;
  std::optional<StanceDecision> stance;
};

struct ClaimTrace {
  ClaimId claim_id = 0;
  std::vector<RankedAbstract> candidates;
  std::vector<ScoredDoc> retrieved;
  std::vector<DocTrace> docs;
};

struct PipelineResult {
  std::vector<ClaimPrediction> predictions;  // sorted by claim id
  std::vector<ClaimTrace> traces;            // same order
};

inline void check_models(const PipelineModels& m, const PipelineOptions& o) {
  if (m.abstract == nullptr) throw UsageError("pipeline: missing abstract model");
  if (m.rationale == nullptr) throw UsageError("pipeline: missing rationale model");
  if (o.stance_mode == StanceMode::TwoStep && (m.noinfo == nullptr || m.sr == nullptr)) {
    throw UsageError("pipeline: two-step stance prediction needs both the NOINFO and the SUPPORTS/REFUTES model");
  }
  if (o.stance_mode == StanceMode::Multiclass && m.multiclass == nullptr) {
    throw UsageError("pipeline: multiclass stance prediction needs a 3-way model");
  }
}

inline std::pair<ClaimPrediction, ClaimTrace> predict_claim(const Claim& claim, const Corpus& corpus,
                                                            const TfIdfIndex& index, const PipelineModels& models,
                                                            const PipelineOptions& opts) {
  ClaimPrediction pred;
  ClaimTrace trace;
  pred.claim_id = trace.claim_id = claim.id;
  const std::string ctx = "claim " + std::to_string(claim.id) + ": ";
  try {
    trace.retrieved =
        retrieve_abstracts(claim.text, corpus, index, *models.abstract, opts.strategy, opts.retrieval, &trace.candidates);
  } catch (...) {
    detail::rethrow_with_context(ctx + "abstract retrieval: ");
  }
  for (const auto& r : trace.retrieved) {
    const auto& doc = corpus.at(r.doc_id);
    const std::string dctx = ctx + "doc " + std::to_string(r.doc_id) + ": ";
    DocTrace dt;
    dt.doc_id = r.doc_id;
    try {
      dt.rationales = select_rationales(claim.text, doc, *models.rationale, opts.rationale_threshold, opts.max_rationales);
    } catch (...) {
      detail::rethrow_with_context(dctx + "rationale selection: ");
    }
    if (dt.rationales.empty()) {
      trace.docs.push_back(std::move(dt));
      continue;
    }
    std::vector<std::size_t> indices;
    for (const auto& s : dt.rationales) indices.push_back(s.index);
    try {
      if (opts.stance_mode == StanceMode::TwoStep) {
        dt.stance = predict_stance(claim.text, doc, indices, *models.noinfo, *models.sr, opts.noinfo_threshold,
                                   opts.sr_threshold);
      } else {
        StanceDecision d;
        d.label = predict_stance_multiclass(claim.text, doc, indices, *models.multiclass);
        dt.stance = d;
      }
    } catch (...) {
      detail::rethrow_with_context(dctx + "stance prediction: ");
    }
    if (dt.stance->label != Stance::NoInfo) pred.evidence.push_back({r.doc_id, dt.stance->label, indices});
    trace.docs.push_back(std::move(dt));
  }
  return {std::move(pred), std::move(trace)};
}

inline PipelineResult run_pipeline(const std::vector<Claim>& claims, const Corpus& corpus, const TfIdfIndex& index,
                                   const PipelineModels& models, const PipelineOptions& opts = {}) {
  check_models(models, opts);
  std::vector<std::size_t> order(claims.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return claims[a].id < claims[b].id; });

  PipelineResult result;
  result.predictions.resize(claims.size());
  result.traces.resize(claims.size());
  detail::parallel_for(order.size(), opts.workers, [&](std::size_t slot) {
    auto [pred, trace] = predict_claim(claims[order[slot]], corpus, index, models, opts);
    result.predictions[slot] = std::move(pred);
    result.traces[slot] = std::move(trace);
  });
  return result;
}

inline nlohmann::ordered_json retrieval_trace_to_json(const ClaimTrace& t) {
  nlohmann::ordered_json j;
  j["id"] = t.claim_id;
  auto cands = nlohmann::ordered_json::array();
  for (const auto& c : t.candidates) cands.push_back({{"doc_id", c.doc_id}, {"tfidf", c.score}});
  j["candidates"] = std::move(cands);
  auto kept = nlohmann::ordered_json::array();
  for (const auto& r : t.retrieved) kept.push_back({{"doc_id", r.doc_id}, {"tfidf", r.tfidf}, {"score", r.score}});
  j["retrieved"] = std::move(kept);
  return j;
}

inline nlohmann::ordered_json rationale_trace_to_json(const ClaimTrace& t) {
  nlohmann::ordered_json j;
  j["id"] = t.claim_id;
  auto docs = nlohmann::ordered_json::array();
  for (const auto& d : t.docs) {
    nlohmann::ordered_json dj;
    dj["doc_id"] = d.doc_id;
    auto sents = nlohmann::ordered_json::array();
    for (const auto& s : d.rationales) sents.push_back({{"index", s.index}, {"score", s.score}});
    dj["rationales"] = std::move(sents);
    if (d.stance) {
      dj["stance"] = external_label(d.stance->label);
      if (!std::isnan(d.stance->has_info_score)) dj["has_info_score"] = d.stance->has_info_score;
      if (!std::isnan(d.stance->supports_score)) dj["supports_score"] = d.stance->supports_score;
    }
    docs.push_back(std::move(dj));
  }
  j["docs"] = std::move(docs);
  return j;
}

}  // namespace rerrfact
