#pragma once
// Sentence-level (selection-only, selection+label) and abstract-level
// (label-only, label+rationale) precision / recall / F1.
//
// Correctness rules, per claim and predicted abstract:
//   label-only       the abstract is gold evidence and the predicted label
//                    equals the gold label
//   label+rationale  label-only holds and some gold rationale is contained
//                    in the first `rationale_truncation` predicted sentences
//   selection-only   (per predicted sentence) the sentence belongs to a gold
//                    rationale all of whose sentences were predicted
//   selection+label  selection-only holds and the abstract label is correct
// Denominators: predicted abstracts / gold evidence abstracts, and predicted
// sentences / distinct gold rationale sentences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"
#include "rerrfact/predictions.hpp"

namespace rerrfact {

inline double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

struct CountTable {
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  double precision() const { return predicted == 0 ? 0.0 : static_cast<double>(correct) / predicted; }
  double recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }

  bool operator==(const CountTable&) const = default;
};

struct MetricFamily {
  CountTable counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static MetricFamily from_counts(const CountTable& c) {
    MetricFamily m;
    m.counts = c;
    m.precision = c.precision();
    m.recall = c.recall();
    m.f1 = rerrfact::f1(m.precision, m.recall);
    return m;
  }

  // For reporting externally computed precision/recall (no counts).
  static MetricFamily from_pr(double p, double r) {
    MetricFamily m;
    m.precision = p;
    m.recall = r;
    m.f1 = rerrfact::f1(p, r);
    return m;
  }
};

struct MetricReport {
  MetricFamily selection_only;
  MetricFamily selection_label;
  MetricFamily label_only;
  MetricFamily label_rationale;

  // Column order of the report table.
  std::array<const MetricFamily*, 4> families() const {
    return {&selection_only, &selection_label, &label_only, &label_rationale};
  }
};

inline constexpr std::array<const char*, 4> kFamilyKeys = {"selection_only", "selection_label", "label_only",
                                                          "label_rationale"};

inline MetricReport evaluate(const std::vector<Claim>& gold, const std::vector<ClaimPrediction>& predictions,
                             std::size_t rationale_truncation = 3, const Corpus* corpus = nullptr) {
  std::unordered_map<ClaimId, const Claim*> by_id;
  for (const auto& c : gold) by_id.emplace(c.id, &c);

  CountTable sel, sel_label, lab, lab_rat;
  for (const auto& c : gold) {
    lab.gold += c.evidence.size();
    for (const auto& ev : c.evidence) sel.gold += ev.rationale_sentences().size();
  }
  lab_rat.gold = lab.gold;
  sel_label.gold = sel.gold;

  std::unordered_set<ClaimId> seen;
  for (const auto& pred : predictions) {
    auto it = by_id.find(pred.claim_id);
    if (it == by_id.end()) throw DataError("prediction for unknown claim id " + std::to_string(pred.claim_id));
    if (!seen.insert(pred.claim_id).second) {
      throw DataError("duplicate prediction for claim id " + std::to_string(pred.claim_id));
    }
    const Claim& claim = *it->second;
    std::unordered_set<DocId> docs_seen;
    for (const auto& pe : pred.evidence) {
      const auto where = "claim " + std::to_string(claim.id) + ", doc " + std::to_string(pe.doc_id) + ": ";
      if (!docs_seen.insert(pe.doc_id).second) throw DataError(where + "abstract predicted twice");
      if (pe.label == Stance::NoInfo) throw DataError(where + "NOINFO abstracts must be omitted");
      if (corpus != nullptr) {
        const auto* doc = corpus->find(pe.doc_id);
        if (doc == nullptr) throw DataError(where + "unknown doc_id");
        for (auto s : pe.sentences) {
          if (s >= doc->n()) throw DataError(where + "sentence index " + std::to_string(s) + " out of range");
        }
      }
      const std::set<std::size_t> predicted(pe.sentences.begin(), pe.sentences.end());
      if (predicted.size() != pe.sentences.size()) throw DataError(where + "duplicate sentence index");

      ++lab.predicted;
      ++lab_rat.predicted;
      sel.predicted += predicted.size();
      sel_label.predicted += predicted.size();

      const auto* ev = claim.evidence_for(pe.doc_id);
      if (ev == nullptr) continue;
      const bool label_ok = ev->label == pe.label;

      if (label_ok) {
        ++lab.correct;
        const auto cut = std::min(rationale_truncation, pe.sentences.size());
        const std::set<std::size_t> head(pe.sentences.begin(), pe.sentences.begin() + static_cast<std::ptrdiff_t>(cut));
        const bool covered = std::any_of(ev->rationales.begin(), ev->rationales.end(), [&](const GoldRationale& r) {
          return std::includes(head.begin(), head.end(), r.sentence_indices.begin(), r.sentence_indices.end());
        });
        if (covered) ++lab_rat.correct;
      }

      for (auto s : predicted) {
        const bool credited = std::any_of(ev->rationales.begin(), ev->rationales.end(), [&](const GoldRationale& r) {
          return std::binary_search(r.sentence_indices.begin(), r.sentence_indices.end(), s) &&
                 std::includes(predicted.begin(), predicted.end(), r.sentence_indices.begin(),
                               r.sentence_indices.end());
        });
        if (credited) {
          ++sel.correct;
          if (label_ok) ++sel_label.correct;
        }
      }
    }
  }

  MetricReport report;
  report.selection_only = MetricFamily::from_counts(sel);
  report.selection_label = MetricFamily::from_counts(sel_label);
  report.label_only = MetricFamily::from_counts(lab);
  report.label_rationale = MetricFamily::from_counts(lab_rat);
  return report;
}

// Percentage with two decimals, rounded half-up.
inline std::string format_percent(double v) {
  const auto hundredths = static_cast<long long>(std::floor(v * 10000.0 + 0.5 + 1e-7));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%02lld", hundredths / 100, hundredths % 100);
  return buf;
}

inline std::string render_report(const std::map<std::string, MetricReport>& reports) {
  if (reports.empty()) throw UsageError("render_report: no reports given");
  std::size_t name_w = 6;
  for (const auto& [name, _] : reports) name_w = std::max(name_w, name.size());
  constexpr int kCell = 7;
  constexpr int kGroup = 3 * kCell;

  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  const auto center = [](const std::string& s, std::size_t w) {
    if (s.size() >= w) return s;
    const auto left = (w - s.size()) / 2;
    return std::string(left, ' ') + s + std::string(w - s.size() - left, ' ');
  };
  const auto right = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
  };

  std::ostringstream out;
  out << pad("", name_w) << " |" << center("Sentence-level", 2 * kGroup + 2) << " |"
      << center("Abstract-level", 2 * kGroup + 2) << '\n';
  out << pad("", name_w);
  for (const char* g : {"Selection-only", "Selection+Label", "Label-Only", "Label+Rationale"}) {
    out << " |" << center(g, kGroup);
  }
  out << '\n';
  out << pad("Models", name_w);
  for (int g = 0; g < 4; ++g) {
    out << " |";
    for (const char* h : {"P", "R", "F1"}) out << right(h, kCell);
  }
  out << '\n';
  out << std::string(name_w + 4 * (kGroup + 2), '-') << '\n';
  for (const auto& [name, rep] : reports) {
    out << pad(name, name_w);
    for (const auto* fam : rep.families()) {
      out << " |" << right(format_percent(fam->precision), kCell) << right(format_percent(fam->recall), kCell)
          << right(format_percent(fam->f1), kCell);
    }
    out << '\n';
  }
  return out.str();
}

inline nlohmann::ordered_json report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  const auto fams = r.families();
  for (std::size_t i = 0; i < fams.size(); ++i) {
    const auto& f = *fams[i];
    j[kFamilyKeys[i]] = {{"precision", f.precision}, {"recall", f.recall},       {"f1", f.f1},
                         {"correct", f.counts.correct}, {"predicted", f.counts.predicted}, {"gold", f.counts.gold}};
  }
  return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  std::array<MetricFamily*, 4> fams = {&r.selection_only, &r.selection_label, &r.label_only, &r.label_rationale};
  try {
    for (std::size_t i = 0; i < fams.size(); ++i) {
      const auto& f = j.at(kFamilyKeys[i]);
      fams[i]->precision = f.at("precision").get<double>();
      fams[i]->recall = f.at("recall").get<double>();
      fams[i]->f1 = f.at("f1").get<double>();
      fams[i]->counts.correct = f.value("correct", std::size_t{0});
      fams[i]->counts.predicted = f.value("predicted", std::size_t{0});
      fams[i]->counts.gold = f.value("gold", std::size_t{0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics document: ") + e.what());
  }
  return r;
}

}  // namespace rerrfact
