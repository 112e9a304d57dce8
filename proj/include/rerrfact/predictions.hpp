#pragma once
// Per-claim predicted evidence and its JSONL form:
//   {"id": <claim_id>, "evidence": {"<doc_id>": {"label": "SUPPORT"|"CONTRADICT", "sentences": [<int>...]}}}

#include <algorithm>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"

namespace rerrfact {

struct PredictedEvidence {
  DocId doc_id = 0;
  Stance label = Stance::Supports;     // never NoInfo
  std::vector<std::size_t> sentences;  // non-empty; order is rank order

  bool operator==(const PredictedEvidence&) const = default;
};

struct ClaimPrediction {
  ClaimId claim_id = 0;
  std::vector<PredictedEvidence> evidence;

  const PredictedEvidence* evidence_for(DocId doc) const {
    for (const auto& e : evidence) {
      if (e.doc_id == doc) return &e;
    }
    return nullptr;
  }

  bool operator==(const ClaimPrediction&) const = default;
};

inline nlohmann::ordered_json prediction_to_json(const ClaimPrediction& p) {
  nlohmann::ordered_json rec;
  rec["id"] = p.claim_id;
  auto ev = nlohmann::ordered_json::object();
  for (const auto& e : p.evidence) {
    nlohmann::ordered_json entry;
    entry["label"] = external_label(e.label);
    entry["sentences"] = e.sentences;
    ev[std::to_string(e.doc_id)] = std::move(entry);
  }
  rec["evidence"] = std::move(ev);
  return rec;
}

inline std::string to_jsonl(const std::vector<ClaimPrediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += prediction_to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<ClaimPrediction> parse_predictions(std::istream& in, const std::string& source = "<predictions>") {
  std::vector<ClaimPrediction> preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto where = source + ":" + std::to_string(lineno) + ": ";
    nlohmann::ordered_json rec;
    try {
      rec = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + "malformed JSON: " + e.what());
    }
    if (!rec.is_object()) throw DataError(where + "record is not a JSON object");
    ClaimPrediction p;
    const auto id = rec.find("id");
    if (id == rec.end() || !id->is_number_integer()) throw DataError(where + "missing integer \"id\"");
    p.claim_id = id->get<ClaimId>();
    if (auto ev = rec.find("evidence"); ev != rec.end() && !ev->is_null()) {
      if (!ev->is_object()) throw DataError(where + "evidence must be an object");
      for (const auto& [key, entry] : ev->items()) {
        PredictedEvidence pe;
        pe.doc_id = detail::parse_doc_key(key, where);
        if (!entry.is_object()) throw DataError(where + "evidence for doc " + key + " must be an object");
        const auto lab = entry.find("label");
        auto parsed = (lab != entry.end() && lab->is_string()) ? parse_gold_label(lab->get<std::string>())
                                                               : std::nullopt;
        if (!parsed) throw DataError(where + "doc " + key + ": label must be SUPPORT or CONTRADICT");
        pe.label = *parsed;
        const auto sents = entry.find("sentences");
        if (sents == entry.end() || !sents->is_array() || sents->empty()) {
          throw DataError(where + "doc " + key + ": sentences must be a non-empty list");
        }
        for (const auto& s : *sents) {
          if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
            throw DataError(where + "doc " + key + ": sentence index " + s.dump() + " is invalid");
          }
          pe.sentences.push_back(s.get<std::size_t>());
        }
        auto sorted = pe.sentences;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
          throw DataError(where + "doc " + key + ": duplicate sentence index");
        }
        if (p.evidence_for(pe.doc_id) != nullptr) throw DataError(where + "doc " + key + " listed twice");
        p.evidence.push_back(std::move(pe));
      }
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

inline std::vector<ClaimPrediction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file " + path);
  return parse_predictions(in, path);
}

}  // namespace rerrfact
