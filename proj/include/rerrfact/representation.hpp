#pragma once
// Claim-conditioning context strings built from an abstract.
//
//   TOTAL    title + every sentence
//   REDUCED  title + first, middle and last sentence
//   DIFF5/3  title + sentences at the most frequent gold-rationale positions
//            (deciles) learned per abstract size group

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"

namespace rerrfact {

enum class SizeGroup { Small = 0, Medium = 1, Large = 2, XLarge = 3 };

inline constexpr std::array<std::string_view, 4> kSizeGroupNames = {"small", "medium", "large", "xlarge"};

inline SizeGroup size_group(std::size_t n) {
  if (n <= 8) return SizeGroup::Small;
  if (n <= 14) return SizeGroup::Medium;
  if (n <= 24) return SizeGroup::Large;
  return SizeGroup::XLarge;
}

// 0-based [0, ceil(n/2) - 1, n - 1], deduplicated, ascending.
inline std::vector<std::size_t> reduced_indices(std::size_t n) {
  if (n == 0) return {};
  std::vector<std::size_t> idx{0, (n + 1) / 2 - 1, n - 1};
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  return idx;
}

inline std::size_t decile_bucket(std::size_t index, std::size_t n) { return (10 * index) / n; }

struct SizeGroupTable {
  static constexpr std::size_t kMaxBuckets = 5;

  std::array<std::vector<int>, 4> buckets;  // indexed by SizeGroup
  std::size_t l_max = 0;

  const std::vector<int>& for_group(SizeGroup g) const { return buckets[static_cast<std::size_t>(g)]; }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (std::size_t g = 0; g < buckets.size(); ++g) j[std::string(kSizeGroupNames[g])] = buckets[g];
    j["l_max"] = l_max;
    return j;
  }

  static SizeGroupTable from_json(const nlohmann::json& j) {
    SizeGroupTable t;
    try {
      for (std::size_t g = 0; g < t.buckets.size(); ++g) {
        auto b = j.at(std::string(kSizeGroupNames[g])).get<std::vector<int>>();
        if (b.size() > kMaxBuckets) throw DataError("size-group table: more than 5 buckets");
        auto sorted = b;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
          throw DataError("size-group table: duplicate bucket");
        }
        for (int v : b) {
          if (v < 0 || v > 9) throw DataError("size-group table: bucket outside 0..9");
        }
        t.buckets[g] = std::move(b);
      }
      t.l_max = j.at("l_max").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed size-group table: ") + e.what());
    }
    return t;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << to_json().dump() << '\n';
  }

  static SizeGroupTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("malformed size-group table " + path + ": " + e.what());
    }
  }

  bool operator==(const SizeGroupTable&) const = default;
};

// Histograms the decile of every gold-rationale sentence per size group and
// keeps the five most frequent deciles (ties go to the lower decile).
inline SizeGroupTable learn_position_table(const std::vector<Claim>& train_claims, const Corpus& corpus) {
  std::array<std::array<std::size_t, 10>, 4> hist{};
  for (const auto& claim : train_claims) {
    for (const auto& ev : claim.evidence) {
      const auto& doc = corpus.at(ev.doc_id);
      const auto g = static_cast<std::size_t>(size_group(doc.n()));
      for (const auto& r : ev.rationales) {
        for (auto i : r.sentence_indices) ++hist[g][decile_bucket(i, doc.n())];
      }
    }
  }
  SizeGroupTable table;
  table.l_max = corpus.max_sentence_count();
  for (std::size_t g = 0; g < hist.size(); ++g) {
    std::vector<int> order(10);
    for (int b = 0; b < 10; ++b) order[b] = b;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return hist[g][a] > hist[g][b]; });
    for (int b : order) {
      if (hist[g][b] == 0 || table.buckets[g].size() == SizeGroupTable::kMaxBuckets) break;
      table.buckets[g].push_back(b);
    }
  }
  return table;
}

enum class ReprKind { Total, Diff5, Diff3, Reduced };

inline std::string_view to_string(ReprKind k) {
  switch (k) {
    case ReprKind::Total: return "total";
    case ReprKind::Diff5: return "diff5";
    case ReprKind::Diff3: return "diff3";
    case ReprKind::Reduced: return "reduced";
  }
  return "reduced";
}

inline ReprKind parse_repr_kind(std::string_view s) {
  if (s == "total") return ReprKind::Total;
  if (s == "diff5" || s == "diff-5") return ReprKind::Diff5;
  if (s == "diff3" || s == "diff-3") return ReprKind::Diff3;
  if (s == "reduced") return ReprKind::Reduced;
  throw UsageError("unknown representation strategy '" + std::string(s) +
                   "' (expected total|diff5|diff3|reduced)");
}

class ReprStrategy {
 public:
  static ReprStrategy total() { return ReprStrategy(ReprKind::Total, std::nullopt); }
  static ReprStrategy reduced() { return ReprStrategy(ReprKind::Reduced, std::nullopt); }
  static ReprStrategy diff5(SizeGroupTable t) { return ReprStrategy(ReprKind::Diff5, std::move(t)); }
  static ReprStrategy diff3(SizeGroupTable t) { return ReprStrategy(ReprKind::Diff3, std::move(t)); }

  // Throws UsageError for a diff strategy without a position table.
  static ReprStrategy make(ReprKind kind, std::optional<SizeGroupTable> table = std::nullopt) {
    return ReprStrategy(kind, std::move(table));
  }

  ReprKind kind() const { return kind_; }
  const std::optional<SizeGroupTable>& position_table() const { return table_; }

  // Sentence indices selected for a document of n sentences, ascending.
  std::vector<std::size_t> sentence_indices(std::size_t n) const {
    switch (kind_) {
      case ReprKind::Total: {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
      }
      case ReprKind::Reduced:
        return reduced_indices(n);
      case ReprKind::Diff5:
      case ReprKind::Diff3: {
        const std::size_t limit = kind_ == ReprKind::Diff5 ? 5 : 3;
        const auto& buckets = table_->for_group(size_group(n));
        if (buckets.empty() || n == 0) return reduced_indices(n);
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < buckets.size() && i < limit; ++i) {
          const double pos = static_cast<double>(buckets[i]) / 10.0 * static_cast<double>(n - 1);
          idx.push_back(static_cast<std::size_t>(std::lround(pos)));
        }
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        return idx;
      }
    }
    return {};
  }

 private:
  ReprStrategy(ReprKind kind, std::optional<SizeGroupTable> table) : kind_(kind), table_(std::move(table)) {
    if ((kind_ == ReprKind::Diff5 || kind_ == ReprKind::Diff3) && !table_) {
      throw UsageError("diff representations require a learned position table");
    }
  }

  ReprKind kind_;
  std::optional<SizeGroupTable> table_;
};

inline std::string join_sentences(const AbstractDoc& doc, const std::vector<std::size_t>& indices) {
  std::string out;
  for (auto i : indices) {
    if (!out.empty()) out += ' ';
    out += doc.sentences.at(i);
  }
  return out;
}

inline std::string build_context(const AbstractDoc& doc, const ReprStrategy& strategy) {
  std::string out = doc.title;
  for (auto i : strategy.sentence_indices(doc.n())) {
    out += ' ';
    out += doc.sentences[i];
  }
  return out;
}

}  // namespace rerrfact
