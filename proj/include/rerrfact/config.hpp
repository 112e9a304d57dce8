#pragma once
// Run configuration. One JSON document; any leaf can be overridden by its
// dotted path (e.g. "retrieval.k=10", "stance.sr.epochs=5").

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rerrfact/classifier.hpp"
#include "rerrfact/errors.hpp"
#include "rerrfact/pipeline.hpp"
#include "rerrfact/representation.hpp"
#include "rerrfact/retrieval.hpp"

namespace rerrfact {

inline nlohmann::json default_config_json() {
  const auto clf = [](const ClassifierConfig& c) { return nlohmann::json(c.to_json()); };
  nlohmann::json j;
  j["paths"] = {{"corpus", ""}, {"claims", ""}, {"model_dir", "models"}, {"output_dir", "out"}};
  j["retrieval"] = {{"k", kDefaultTopK}, {"fields", "title+abstract"}};
  j["representation"] = {{"strategy", "reduced"}};
  j["abstract"] = clf(ClassifierConfig::retrieval_defaults());
  j["abstract"]["neg_per_claim"] = kDefaultTopK;
  j["abstract"]["max_abstracts"] = 0;
  j["rationale"] = clf(ClassifierConfig::retrieval_defaults());
  j["rationale"]["mode"] = "loose_coupling";
  j["rationale"]["max_rationales"] = 0;
  j["rationale"]["false_retrieval_docs"] = 3;
  j["stance"] = {{"mode", "two_step"}, {"negatives", "gold"}, {"noinfo_docs", 3}};
  j["stance"]["noinfo"] = clf(ClassifierConfig::stance_defaults());
  j["stance"]["sr"] = clf(ClassifierConfig::stance_defaults());
  j["stance"]["multiclass"] = clf(ClassifierConfig::stance_defaults());
  j["scorers"] = {{"abstract", ""}, {"rationale", ""}, {"stance_noinfo", ""}, {"stance_sr", ""}, {"timeout_s", 30.0}};
  j["eval"] = {{"rationale_truncation", 3}};
  j["seed"] = 0;
  j["workers"] = 0;
  return j;
}

namespace detail {

// Recursively merges `patch` into `base`; unknown keys are rejected.
inline void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  if (!patch.is_object()) throw UsageError("config: '" + path + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const auto full = path.empty() ? key : path + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw UsageError("config: unknown key '" + full + "'");
    if (it->is_object()) {
      merge_config(*it, value, full);
      continue;
    }
    const bool same_kind = (it->is_number() && value.is_number()) || (it->is_string() && value.is_string()) ||
                           (it->is_boolean() && value.is_boolean());
    if (!same_kind) throw UsageError("config: '" + full + "' has the wrong type");
    *it = value;
  }
}

inline nlohmann::json parse_override_value(const nlohmann::json& current, const std::string& raw) {
  if (current.is_string()) return raw;
  try {
    auto v = nlohmann::json::parse(raw);
    if (current.is_number() && !v.is_number()) throw UsageError("");
    if (current.is_boolean() && !v.is_boolean()) throw UsageError("");
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: value '" + raw + "' has the wrong type");
  }
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() : json_(default_config_json()) {}

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    nlohmann::json patch;
    try {
      patch = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError("malformed config file " + path + ": " + e.what());
    }
    RunConfig c;
    c.merge(patch);
    return c;
  }

  void merge(const nlohmann::json& patch) { detail::merge_config(json_, patch, ""); }

  // Applies "a.b.c=value".
  void set(std::string_view dotted, const std::string& raw) {
    nlohmann::json* node = &json_;
    std::string path(dotted);
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      auto it = node->find(key);
      if (!node->is_object() || it == node->end()) throw UsageError("unknown config key '" + path + "'");
      node = &*it;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (node->is_object()) throw UsageError("config key '" + path + "' is a section, not a value");
    *node = detail::parse_override_value(*node, raw);
  }

  const nlohmann::json& json() const { return json_; }

  std::string str(const char* section, const char* key) const { return json_.at(section).at(key).get<std::string>(); }
  std::string path(const char* key) const { return str("paths", key); }

  ClassifierConfig classifier(const nlohmann::json& node) const {
    auto c = ClassifierConfig::from_json(node);
    if (node.find("seed") == node.end() || node.at("seed").get<std::uint64_t>() == 0) c.seed = seed();
    c.validate();
    return c;
  }
  ClassifierConfig abstract_classifier() const { return classifier(json_.at("abstract")); }
  ClassifierConfig rationale_classifier() const { return classifier(json_.at("rationale")); }
  ClassifierConfig noinfo_classifier() const { return classifier(json_.at("stance").at("noinfo")); }
  ClassifierConfig sr_classifier() const { return classifier(json_.at("stance").at("sr")); }
  ClassifierConfig multiclass_classifier() const { return classifier(json_.at("stance").at("multiclass")); }

  std::size_t k() const {
    const auto v = json_.at("retrieval").at("k").get<std::int64_t>();
    if (v < 1) throw UsageError("retrieval.k must be >= 1");
    return static_cast<std::size_t>(v);
  }
  IndexFields fields() const { return parse_index_fields(str("retrieval", "fields")); }
  ReprKind repr_kind() const { return parse_repr_kind(str("representation", "strategy")); }
  RationaleMode rationale_mode() const { return parse_rationale_mode(str("rationale", "mode")); }
  StanceMode stance_mode() const { return parse_stance_mode(str("stance", "mode")); }
  StanceSource stance_source() const { return parse_stance_source(str("stance", "negatives")); }
  std::uint64_t seed() const { return json_.at("seed").get<std::uint64_t>(); }

  std::size_t workers() const {
    const auto w = json_.at("workers").get<std::int64_t>();
    if (w < 0) throw UsageError("workers must be >= 0");
    if (w == 0) {
      const auto hw = std::thread::hardware_concurrency();
      return hw == 0 ? 1 : hw;
    }
    return static_cast<std::size_t>(w);
  }

  std::size_t size_value(const char* section, const char* key) const {
    const auto v = json_.at(section).at(key).get<std::int64_t>();
    if (v < 0) throw UsageError(std::string(section) + "." + key + " must be >= 0");
    return static_cast<std::size_t>(v);
  }

  // Endpoint for a scorer task: config value, else RERRFACT_SCORER_<TASK>.
  std::string scorer_endpoint(std::string_view task_tag) const {
    auto v = json_.at("scorers").at(std::string(task_tag)).get<std::string>();
    if (!v.empty()) return v;
    std::string env = "RERRFACT_SCORER_";
    for (char c : task_tag) env += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* e = std::getenv(env.c_str()); e != nullptr) return e;
    return {};
  }

  std::chrono::milliseconds scorer_timeout() const {
    const double s = json_.at("scorers").at("timeout_s").get<double>();
    if (!(s > 0)) throw UsageError("scorers.timeout_s must be positive");
    return std::chrono::milliseconds(static_cast<long long>(s * 1000.0));
  }

  RetrievalOptions retrieval_options() const {
    RetrievalOptions o;
    o.k = k();
    o.threshold = abstract_classifier().threshold;
    o.max_abstracts = size_value("abstract", "max_abstracts");
    return o;
  }

 private:
  nlohmann::json json_;
};

}  // namespace rerrfact
