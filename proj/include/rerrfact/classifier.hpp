#pragma once
// Built-in (claim, context) pair classifier: hashed binary n-gram features and
// logistic regression (softmax for the 3-way baseline) fit by seeded SGD.
//
// It stands in for the fine-tuned language models; external models attach
// through the scorer wire protocol in scorer.hpp instead.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rerrfact/corpus.hpp"
#include "rerrfact/errors.hpp"
#include "rerrfact/text.hpp"

namespace rerrfact {

// Bumped whenever featurize() changes its output for the same input.
inline constexpr std::uint32_t kFeatureSpecVersion = 1;

struct ClassifierConfig {
  std::uint32_t epochs = 10;
  std::uint32_t batch_size = 1;
  double learning_rate = 0.1;
  double l2 = 1e-6;
  std::uint32_t hash_dims = 1u << 20;
  std::uint64_t seed = 0;
  double threshold = 0.5;

  void validate() const {
    if (epochs < 1) throw UsageError("classifier: epochs must be >= 1");
    if (batch_size < 1) throw UsageError("classifier: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw UsageError("classifier: learning_rate must be positive");
    if (!(l2 >= 0.0)) throw UsageError("classifier: l2 must be non-negative");
    if (hash_dims == 0 || (hash_dims & (hash_dims - 1)) != 0) {
      throw UsageError("classifier: hash_dims must be a power of two");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("classifier: threshold must lie in (0,1)");
  }

  nlohmann::ordered_json to_json() const {
    return {{"epochs", epochs},       {"batch_size", batch_size}, {"learning_rate", learning_rate},
            {"l2", l2},               {"hash_dims", hash_dims},   {"seed", seed},
            {"threshold", threshold}};
  }

  static ClassifierConfig from_json(const nlohmann::json& j) { return from_json(j, ClassifierConfig{}); }

  static ClassifierConfig from_json(const nlohmann::json& j, ClassifierConfig base) {
    auto c = base;
    const auto get = [&j](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end()) field = it->get<std::decay_t<decltype(field)>>();
    };
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("l2", c.l2);
    get("hash_dims", c.hash_dims);
    get("seed", c.seed);
    get("threshold", c.threshold);
    return c;
  }

  // Abstract and rationale stages: ten epochs, batch size one.
  static ClassifierConfig retrieval_defaults() { return ClassifierConfig{}; }

  // Stance models: thirty epochs, batch size one.
  static ClassifierConfig stance_defaults() {
    ClassifierConfig c;
    c.epochs = 30;
    return c;
  }
};

struct TextPair {
  std::string claim;
  std::string context;
};

// label: 0/1 in binary mode, a Stance value (0..2) in 3-way mode.
struct LabeledPair {
  std::string claim;
  std::string context;
  int label = 0;

  bool operator==(const LabeledPair&) const = default;
  auto operator<=>(const LabeledPair&) const = default;
};

inline bool decide(double score, double threshold) { return score >= threshold; }

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Feature strings before hashing: "c:" claim unigrams and bigrams, "x:"
// context unigrams and bigrams, "o:" unigrams shared by claim and context.
inline std::vector<std::string> feature_names(std::string_view claim, std::string_view context) {
  const auto ct = text::tokenize(claim);
  const auto xt = text::tokenize(context);
  std::set<std::string> feats;
  const auto add_ngrams = [&feats](const std::vector<std::string>& toks, const char* prefix) {
    for (std::size_t i = 0; i < toks.size(); ++i) {
      feats.insert(prefix + toks[i]);
      if (i + 1 < toks.size()) feats.insert(prefix + toks[i] + "_" + toks[i + 1]);
    }
  };
  add_ngrams(ct, "c:");
  add_ngrams(xt, "x:");
  const std::set<std::string> cset(ct.begin(), ct.end());
  for (const auto& t : std::set<std::string>(xt.begin(), xt.end())) {
    if (cset.count(t)) feats.insert("o:" + t);
  }
  return {feats.begin(), feats.end()};
}

// Active hash buckets (sorted, unique); every active feature has value 1.
inline std::vector<std::uint32_t> featurize(std::string_view claim, std::string_view context,
                                            std::uint32_t hash_dims) {
  std::vector<std::uint32_t> buckets;
  for (const auto& f : feature_names(claim, context)) {
    buckets.push_back(static_cast<std::uint32_t>(fnv1a64(f) & (hash_dims - 1)));
  }
  std::sort(buckets.begin(), buckets.end());
  buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
  return buckets;
}

// A real-valued sparse example. Hashed text features use value 1.0.
struct SparseExample {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  int label = 0;
};

// Linear parameters: one weight row per output (1 row for binary logistic,
// K rows for K-way softmax).
struct LinearParams {
  std::vector<std::vector<double>> weights;
  std::vector<double> bias;

  std::size_t outputs() const { return weights.size(); }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> softmax(std::vector<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

inline double margin(const std::vector<double>& w, double b, const SparseExample& x) {
  double z = b;
  for (std::size_t i = 0; i < x.index.size(); ++i) z += w[x.index[i]] * x.value[i];
  return z;
}

inline std::vector<double> margins(const LinearParams& p, const SparseExample& x) {
  std::vector<double> z(p.outputs());
  for (std::size_t k = 0; k < z.size(); ++k) z[k] = margin(p.weights[k], p.bias[k], x);
  return z;
}

// Class probabilities: {p(label=1)} for binary, the softmax vector otherwise.
inline std::vector<double> probabilities_from_margins(std::vector<double> z) {
  if (z.size() == 1) return {sigmoid(z[0])};
  return softmax(std::move(z));
}

inline std::vector<double> probabilities(const LinearParams& p, const SparseExample& x) {
  return probabilities_from_margins(margins(p, x));
}

// d(loss)/d(margin_k) for one example: p - y (binary) or p_k - [k == y].
inline std::vector<double> loss_margin_gradient(std::vector<double> z, int label) {
  auto g = probabilities_from_margins(std::move(z));
  if (g.size() == 1) {
    g[0] -= label == 1 ? 1.0 : 0.0;
  } else {
    g[static_cast<std::size_t>(label)] -= 1.0;
  }
  return g;
}

}  // namespace detail

// Mean cross-entropy over examples plus (l2 / 2) * ||W||^2 (bias not decayed).
inline double objective_loss(const LinearParams& p, const std::vector<SparseExample>& xs, double l2) {
  double loss = 0.0;
  for (const auto& x : xs) {
    const auto probs = detail::probabilities(p, x);
    const double py = p.outputs() == 1 ? (x.label == 1 ? probs[0] : 1.0 - probs[0])
                                       : probs[static_cast<std::size_t>(x.label)];
    loss -= std::log(py);
  }
  loss /= static_cast<double>(xs.size());
  double sq = 0.0;
  for (const auto& row : p.weights) {
    for (double w : row) sq += w * w;
  }
  return loss + 0.5 * l2 * sq;
}

// Analytic gradient of objective_loss, same shape as the parameters.
inline LinearParams objective_gradient(const LinearParams& p, const std::vector<SparseExample>& xs, double l2) {
  LinearParams g;
  g.weights.assign(p.outputs(), std::vector<double>(p.weights.front().size(), 0.0));
  g.bias.assign(p.outputs(), 0.0);
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (const auto& x : xs) {
    const auto dm = detail::loss_margin_gradient(detail::margins(p, x), x.label);
    for (std::size_t k = 0; k < dm.size(); ++k) {
      g.bias[k] += dm[k] * inv;
      for (std::size_t i = 0; i < x.index.size(); ++i) g.weights[k][x.index[i]] += dm[k] * x.value[i] * inv;
    }
  }
  for (std::size_t k = 0; k < p.outputs(); ++k) {
    for (std::size_t j = 0; j < p.weights[k].size(); ++j) g.weights[k][j] += l2 * p.weights[k][j];
  }
  return g;
}

class ClassifierModel {
 public:
  ClassifierModel() = default;

  // All-zero model. num_classes is 2 (binary) or 3 (stance baseline).
  static ClassifierModel zeros(const ClassifierConfig& config, std::uint32_t num_classes = 2) {
    config.validate();
    if (num_classes < 2) throw UsageError("classifier needs at least two classes");
    ClassifierModel m;
    m.config_ = config;
    m.num_classes_ = num_classes;
    const std::size_t rows = num_classes == 2 ? 1 : num_classes;
    m.params_.weights.assign(rows, std::vector<double>(config.hash_dims, 0.0));
    m.params_.bias.assign(rows, 0.0);
    return m;
  }

  std::uint32_t num_classes() const { return num_classes_; }
  bool multiclass() const { return num_classes_ > 2; }
  const ClassifierConfig& config() const { return config_; }
  std::uint32_t feature_spec_version() const { return feature_spec_version_; }
  const LinearParams& params() const { return params_; }
  LinearParams& mutable_params() { return params_; }

  SparseExample example(std::string_view claim, std::string_view context, int label = 0) const {
    SparseExample x;
    x.index = featurize(claim, context, config_.hash_dims);
    x.value.assign(x.index.size(), 1.0);
    x.label = label;
    return x;
  }

  // P(positive) in binary mode.
  double predict(std::string_view claim, std::string_view context) const {
    check_version();
    if (multiclass()) throw UsageError("predict: model is multiclass, use predict_proba");
    return detail::probabilities(params_, example(claim, context))[0];
  }

  // Probability vector ordered (NOINFO, REFUTES, SUPPORTS) in 3-way mode;
  // (negative, positive) in binary mode.
  std::vector<double> predict_proba(std::string_view claim, std::string_view context) const {
    check_version();
    auto probs = detail::probabilities(params_, example(claim, context));
    if (!multiclass()) return {1.0 - probs[0], probs[0]};
    return probs;
  }

  void save(std::ostream& out) const {
    const auto cfg = config_.to_json().dump();
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kFileVersion);
    write_u32(out, feature_spec_version_);
    write_u32(out, num_classes_);
    write_u32(out, config_.hash_dims);
    write_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    for (std::size_t k = 0; k < params_.outputs(); ++k) {
      write_f64(out, params_.bias[k]);
      const auto& row = params_.weights[k];
      std::uint32_t nnz = 0;
      for (double w : row) nnz += w != 0.0;
      write_u32(out, nnz);
      for (std::uint32_t j = 0; j < row.size(); ++j) {
        if (row[j] == 0.0) continue;
        write_u32(out, j);
        write_f64(out, row[j]);
      }
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model file " + path);
    save(out);
  }

  static ClassifierModel load(std::istream& in, const std::string& source = "<model>") {
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
      throw DataError(source + ": not a classifier model file");
    }
    if (read_u32(in, source) != kFileVersion) throw DataError(source + ": unsupported model file version");
    ClassifierModel m;
    m.feature_spec_version_ = read_u32(in, source);
    m.num_classes_ = read_u32(in, source);
    const auto dims = read_u32(in, source);
    const auto cfg_len = read_u32(in, source);
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    if (!in) throw DataError(source + ": truncated model file");
    try {
      m.config_ = ClassifierConfig::from_json(nlohmann::json::parse(cfg));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(source + ": bad config block: " + e.what());
    }
    if (m.config_.hash_dims != dims || m.num_classes_ < 2) throw DataError(source + ": inconsistent header");
    const std::size_t rows = m.num_classes_ == 2 ? 1 : m.num_classes_;
    m.params_.weights.assign(rows, std::vector<double>(dims, 0.0));
    m.params_.bias.assign(rows, 0.0);
    for (std::size_t k = 0; k < rows; ++k) {
      m.params_.bias[k] = read_f64(in, source);
      const auto nnz = read_u32(in, source);
      for (std::uint32_t e = 0; e < nnz; ++e) {
        const auto j = read_u32(in, source);
        if (j >= dims) throw DataError(source + ": weight index out of range");
        m.params_.weights[k][j] = read_f64(in, source);
      }
    }
    return m;
  }

  static ClassifierModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file " + path);
    return load(in, path);
  }

  void set_feature_spec_version(std::uint32_t v) { feature_spec_version_ = v; }

 private:
  static constexpr char kMagic[8] = {'R', 'R', 'F', 'M', 'O', 'D', 'E', 'L'};
  static constexpr std::uint32_t kFileVersion = 1;

  void check_version() const {
    if (feature_spec_version_ != kFeatureSpecVersion) {
      throw DataError("model feature_spec_version " + std::to_string(feature_spec_version_) +
                      " does not match featurizer version " + std::to_string(kFeatureSpecVersion));
    }
  }

  static void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  static void write_f64(std::ostream& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(bits));
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  static std::uint32_t read_u32(std::istream& in, const std::string& source) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError(source + ": truncated model file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static double read_f64(std::istream& in, const std::string& source) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw DataError(source + ": truncated model file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v = 0;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  ClassifierConfig config_;
  std::uint32_t num_classes_ = 2;
  std::uint32_t feature_spec_version_ = kFeatureSpecVersion;
  LinearParams params_;
};

// Seeded mini-batch SGD on objective_loss. Each step applies the mean
// gradient of the batch (evaluated at the pre-step parameters) and the L2
// decay; the example order of every epoch is a seeded shuffle.
inline ClassifierModel train(const std::vector<LabeledPair>& pairs, const ClassifierConfig& config,
                             std::uint32_t num_classes = 2) {
  config.validate();
  if (pairs.empty()) throw DataError("train: empty training set");
  std::vector<std::size_t> per_class(num_classes, 0);
  for (const auto& p : pairs) {
    if (p.label < 0 || static_cast<std::uint32_t>(p.label) >= num_classes) {
      throw DataError("train: label " + std::to_string(p.label) + " outside 0.." + std::to_string(num_classes - 1));
    }
    if (text::trim(p.claim).empty() || text::trim(p.context).empty()) {
      throw DataError("train: claim and context texts must be non-empty");
    }
    ++per_class[static_cast<std::size_t>(p.label)];
  }
  const auto present = std::count_if(per_class.begin(), per_class.end(), [](std::size_t n) { return n > 0; });
  if (num_classes == 2 && present < 2) {
    throw DataError("train: training set contains a single class; decision boundary undefined");
  }
  if (num_classes > 2 && present < 2) throw DataError("train: multiclass training set needs at least two classes");

  auto model = ClassifierModel::zeros(config, num_classes);
  auto& params = model.mutable_params();
  const std::size_t rows = params.outputs();

  std::vector<SparseExample> examples;
  examples.reserve(pairs.size());
  for (const auto& p : pairs) examples.push_back(model.example(p.claim, p.context, p.label));

  // w = scale * v lets the L2 decay touch only the scalar each step.
  double scale = 1.0;
  const double decay = 1.0 - config.learning_rate * config.l2;
  const auto fold_scale = [&] {
    for (auto& row : params.weights) {
      for (auto& w : row) w *= scale;
    }
    scale = 1.0;
  };
  const auto true_weight = [&](std::size_t k, std::uint32_t j) { return params.weights[k][j] * scale; };

  std::vector<std::size_t> order(examples.size());
  struct Update {
    std::size_t row;
    std::uint32_t index;
    double grad;
  };
  std::vector<Update> pending;
  std::vector<double> bias_grad(rows);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, config.seed + 0x9E3779B97F4A7C15ull * (epoch + 1));
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      pending.clear();
      std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& x = examples[order[b]];
        std::vector<double> z(rows);
        for (std::size_t k = 0; k < rows; ++k) {
          double m = params.bias[k];
          for (std::size_t i = 0; i < x.index.size(); ++i) m += true_weight(k, x.index[i]) * x.value[i];
          z[k] = m;
        }
        const auto g = detail::loss_margin_gradient(std::move(z), x.label);
        for (std::size_t k = 0; k < rows; ++k) {
          bias_grad[k] += g[k] * inv;
          for (std::size_t i = 0; i < x.index.size(); ++i) pending.push_back({k, x.index[i], g[k] * x.value[i] * inv});
        }
      }
      scale *= decay;
      for (const auto& u : pending) params.weights[u.row][u.index] -= config.learning_rate * u.grad / scale;
      for (std::size_t k = 0; k < rows; ++k) params.bias[k] -= config.learning_rate * bias_grad[k];
      if (scale < 1e-6) fold_scale();
    }
  }
  fold_scale();
  return model;
}

}  // namespace rerrfact
