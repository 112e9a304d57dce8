#pragma once
// Small synthetic dataset with lexically separable evidence.
//
// Every claim owns kTopicWords topic words. Its gold abstract repeats them in
// the title and in each rationale sentence, which also carries a direction word
// ("elevates" for SUPPORT, "suppresses" for CONTRADICT). All other sentences
// are drawn from a filler vocabulary that no claim uses.

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rerrfact/rerrfact.hpp"

namespace fixture {

inline std::string word(std::size_t n) {
  static const char* syl[] = {"ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "ze", "bo", "di"};
  std::string w = "q";
  for (int i = 0; i < 3; ++i) {
    w += syl[n % 12];
    n /= 12;
  }
  return w;
}

inline constexpr std::size_t kTopicWords = 8;

inline std::string topic(std::size_t claim, std::size_t j) { return word(100 + kTopicWords * claim + j); }

inline std::string topics(std::size_t claim, std::size_t from, std::size_t to) {
  std::string s;
  for (std::size_t j = from; j < to; ++j) {
    if (!s.empty()) s += ' ';
    s += topic(claim, j);
  }
  return s;
}

inline std::string doc_word(std::size_t doc, std::size_t j) { return word(600 + 3 * doc + j); }

inline const std::vector<std::string>& filler() {
  static const std::vector<std::string> f = {
      "cohort",   "baseline", "samples",  "protocol", "measured", "patients", "follow",  "analysis",
      "observed", "methods",  "recruited", "controls", "outcome",  "interval", "reported", "variance"};
  return f;
}

inline std::string filler_sentence(std::size_t doc, std::size_t i) {
  const auto& f = filler();
  std::string s;
  for (std::size_t j = 0; j < 5; ++j) {
    if (!s.empty()) s += ' ';
    s += f[(doc * 7 + i * 3 + j * 5) % f.size()];
  }
  return s + " " + doc_word(doc, i % 3) + ".";
}

struct Spec {
  std::size_t doc;
  std::size_t n;
  bool supports;
  std::vector<std::vector<std::size_t>> rationales;
};

// claim id -> gold docs. Claims 9 and 10 carry no evidence; claim 9 cites doc 12.
inline std::vector<std::pair<std::size_t, std::vector<Spec>>> layout() {
  return {
      {1, {{0, 3, true, {{1}}}}},
      {2, {{1, 5, false, {{0}}}}},
      {3, {{2, 8, true, {{2, 3}}}}},
      {4, {{3, 9, false, {{4}}}}},
      {5, {{4, 14, true, {{7}, {12}}}}},
      {6, {{5, 15, false, {{10}}}}},
      {7, {{6, 24, true, {{20}}}}},
      {8, {{7, 25, false, {{5}}}, {8, 6, false, {{3}}}}},
      {9, {}},
      {10, {}},
  };
}

inline constexpr std::size_t kDocs = 20;

inline std::string corpus_jsonl() {
  std::vector<std::vector<std::string>> sentences(kDocs);
  std::vector<std::string> titles(kDocs);
  std::vector<std::size_t> sizes(kDocs, 0);
  for (std::size_t d = 0; d < kDocs; ++d) sizes[d] = 4 + (d * 5) % 9;
  for (const auto& [cid, specs] : layout()) {
    for (const auto& s : specs) sizes[s.doc] = s.n;
  }
  for (std::size_t d = 0; d < kDocs; ++d) {
    titles[d] = doc_word(d, 0) + " " + doc_word(d, 1) + " study";
    for (std::size_t i = 0; i < sizes[d]; ++i) sentences[d].push_back(filler_sentence(d, i));
  }
  for (const auto& [cid, specs] : layout()) {
    for (const auto& s : specs) {
      titles[s.doc] = topics(cid, 0, kTopicWords) + " " + doc_word(s.doc, 0);
      for (const auto& r : s.rationales) {
        for (auto i : r) {
          sentences[s.doc][i] = topics(cid, 0, kTopicWords - 1) + " " + (s.supports ? "elevates" : "suppresses") +
                                " " + topic(cid, kTopicWords - 1) + ".";
        }
      }
    }
  }
  std::ostringstream out;
  for (std::size_t d = 0; d < kDocs; ++d) {
    nlohmann::json rec;
    rec["doc_id"] = 1000 + d;
    rec["title"] = titles[d];
    rec["abstract"] = sentences[d];
    out << rec.dump() << '\n';
  }
  return out.str();
}

inline std::string claims_jsonl() {
  std::ostringstream out;
  for (const auto& [cid, specs] : layout()) {
    nlohmann::json rec;
    rec["id"] = cid;
    rec["claim"] = topics(cid, 0, kTopicWords);
    rec["evidence"] = nlohmann::json::object();
    rec["cited_doc_ids"] = nlohmann::json::array();
    for (const auto& s : specs) {
      auto entries = nlohmann::json::array();
      for (const auto& r : s.rationales) {
        entries.push_back({{"sentences", r}, {"label", s.supports ? "SUPPORT" : "CONTRADICT"}});
      }
      rec["evidence"][std::to_string(1000 + s.doc)] = entries;
      rec["cited_doc_ids"].push_back(1000 + s.doc);
    }
    if (cid == 9) rec["cited_doc_ids"].push_back(1012);
    out << rec.dump() << '\n';
  }
  return out.str();
}

inline rerrfact::Corpus corpus() {
  std::istringstream in(corpus_jsonl());
  return rerrfact::parse_corpus(in, "fixture-corpus");
}

inline std::vector<rerrfact::Claim> claims(const rerrfact::Corpus& c) {
  std::istringstream in(claims_jsonl());
  return rerrfact::parse_claims(in, c, "fixture-claims");
}

// Writes corpus.jsonl and claims.jsonl into dir.
inline void write_files(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "corpus.jsonl") << corpus_jsonl();
  std::ofstream(dir / "claims.jsonl") << claims_jsonl();
}

// Stage models trained on the fixture with default hyperparameters.
struct Models {
  std::shared_ptr<rerrfact::ClassifierModel> abstract;
  std::shared_ptr<rerrfact::ClassifierModel> rationale;
  std::shared_ptr<rerrfact::ClassifierModel> noinfo;
  std::shared_ptr<rerrfact::ClassifierModel> sr;
  std::shared_ptr<rerrfact::ClassifierModel> multiclass;
};

inline Models train_models(const rerrfact::Corpus& corpus, const std::vector<rerrfact::Claim>& claims,
                           const rerrfact::TfIdfIndex& index, std::uint64_t seed = 0) {
  using namespace rerrfact;
  auto retrieval_cfg = ClassifierConfig::retrieval_defaults();
  auto stance_cfg = ClassifierConfig::stance_defaults();
  retrieval_cfg.seed = stance_cfg.seed = seed;

  Models m;
  const auto strategy = ReprStrategy::reduced();
  m.abstract = std::make_shared<ClassifierModel>(
      train(build_abstract_training_set(claims, corpus, index, strategy), retrieval_cfg));
  LocalScorer abstract_scorer(m.abstract);
  RationaleSetOptions ro;
  ro.abstract_scorer = &abstract_scorer;
  m.rationale = std::make_shared<ClassifierModel>(
      train(build_rationale_training_set(RationaleMode::LooseCoupling, claims, corpus, index, ro), retrieval_cfg));
  const auto sets = build_stance_training_sets(claims, corpus, index);
  m.noinfo = std::make_shared<ClassifierModel>(train(sets.noinfo, stance_cfg));
  m.sr = std::make_shared<ClassifierModel>(train(sets.sr, stance_cfg));
  m.multiclass = std::make_shared<ClassifierModel>(train(sets.multiclass, stance_cfg, 3));
  return m;
}

inline rerrfact::PipelineResult run(const rerrfact::Corpus& corpus, const std::vector<rerrfact::Claim>& claims,
                                    const rerrfact::TfIdfIndex& index, const Models& m, std::size_t workers = 1,
                                    rerrfact::StanceMode mode = rerrfact::StanceMode::TwoStep) {
  using namespace rerrfact;
  LocalScorer a(m.abstract), r(m.rationale), n(m.noinfo), s(m.sr);
  PipelineModels models{&a, &r, &n, &s, m.multiclass.get()};
  PipelineOptions opts;
  opts.workers = workers;
  opts.stance_mode = mode;
  return run_pipeline(claims, corpus, index, models, opts);
}

}  // namespace fixture
