// rerrfact: command-line driver for the claim verification pipeline.
//
//   rerrfact validate     --corpus C --claims Q
//   rerrfact build-index  --corpus C --model-dir M
//   rerrfact train        --stage abstract|rationale|stance [--mode <rationale mode>] [--multiclass]
//   rerrfact predict      [--emit-intermediate]
//   rerrfact evaluate     --predictions P
//   rerrfact report       --metrics F [--metrics F ...]
//
// Every config field can be overridden with --<dotted.name> <value>.
// Exit codes: 0 ok, 1 data/validation error, 2 usage error, 3 scorer protocol error.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rerrfact/rerrfact.hpp"

namespace fs = std::filesystem;
using namespace rerrfact;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitScorer = 3;

struct GlobalOptions {
  std::string config_path;
  std::string corpus;
  std::string claims;
  std::string model_dir;
  std::string output_dir;
  std::optional<std::int64_t> workers;
  std::optional<std::uint64_t> seed;
};

// Artifact names inside the model directory.
namespace artifact {
constexpr const char* kIndex = "index.json";
constexpr const char* kPositionTable = "position_table.json";
constexpr const char* kAbstract = "abstract.model";
constexpr const char* kRationale = "rationale.model";
constexpr const char* kNoInfo = "stance_noinfo.model";
constexpr const char* kSr = "stance_sr.model";
constexpr const char* kMulticlass = "stance_multiclass.model";
}  // namespace artifact

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
}

class Context {
 public:
  explicit Context(RunConfig cfg) : cfg_(std::move(cfg)) {}

  const RunConfig& cfg() const { return cfg_; }

  fs::path model_dir() const { return cfg_.path("model_dir"); }
  fs::path output_dir() const { return cfg_.path("output_dir"); }
  fs::path model_file(const char* name) const { return model_dir() / name; }

  static void require_file(const std::string& what, const std::string& p) {
    if (p.empty()) throw UsageError("missing required path: " + what);
    if (!fs::is_regular_file(p)) throw UsageError(what + " not found: " + p);
  }

  const Corpus& corpus() {
    if (!corpus_) {
      const auto p = cfg_.path("corpus");
      require_file("corpus (--corpus)", p);
      corpus_ = load_corpus(p);
    }
    return *corpus_;
  }

  const std::vector<Claim>& claims() {
    if (!claims_) {
      const auto p = cfg_.path("claims");
      require_file("claims (--claims)", p);
      claims_ = load_claims(p, corpus());
    }
    return *claims_;
  }

  const TfIdfIndex& index() {
    if (!index_) {
      const auto saved = model_file(artifact::kIndex);
      if (fs::is_regular_file(saved)) {
        auto loaded = TfIdfIndex::load(saved.string());
        if (loaded.fields() == cfg_.fields() && loaded.doc_ids() == index_doc_ids()) index_ = std::move(loaded);
      }
      if (!index_) index_ = TfIdfIndex::build(corpus(), cfg_.fields());
    }
    return *index_;
  }

  // Representation strategy; diff variants read the learned position table.
  ReprStrategy strategy() {
    const auto kind = cfg_.repr_kind();
    if (kind == ReprKind::Total || kind == ReprKind::Reduced) return ReprStrategy::make(kind);
    const auto p = model_file(artifact::kPositionTable);
    if (!fs::is_regular_file(p)) {
      throw DataError("representation '" + std::string(to_string(kind)) + "' needs " + p.string() +
                      " (run: train --stage abstract)");
    }
    return ReprStrategy::make(kind, SizeGroupTable::load(p.string()));
  }

  // Remote scorer if an endpoint is configured, else the local model file.
  // Returns nullptr when neither is available.
  std::shared_ptr<PairScorer> scorer(std::string_view task_tag, const char* model_name) {
    const auto endpoint = cfg_.scorer_endpoint(task_tag);
    if (!endpoint.empty()) {
      auto client = std::make_shared<ScorerClient>(endpoint, std::string(task_tag), cfg_.scorer_timeout());
      return std::make_shared<RemoteScorer>(std::move(client));
    }
    const auto p = model_file(model_name);
    if (!fs::is_regular_file(p)) return nullptr;
    return std::make_shared<LocalScorer>(std::make_shared<ClassifierModel>(ClassifierModel::load(p.string())));
  }

  std::shared_ptr<PairScorer> require_scorer(std::string_view task_tag, const char* model_name,
                                             const std::string& hint) {
    auto s = scorer(task_tag, model_name);
    if (!s) {
      throw DataError("missing prerequisite: " + model_file(model_name).string() + " (" + hint +
                      ") and no scorer endpoint configured for task '" + std::string(task_tag) + "'");
    }
    return s;
  }

  void write_meta(const fs::path& p, const nlohmann::json& extra) const {
    nlohmann::ordered_json meta;
    meta["timestamp"] = iso_timestamp();
    for (const auto& [k, v] : extra.items()) meta[k] = v;
    meta["config"] = cfg_.json();
    write_file(p, meta.dump(2) + "\n");
  }

 private:
  std::vector<DocId> index_doc_ids() {
    std::vector<DocId> ids;
    for (const auto& d : corpus()) ids.push_back(d.doc_id);
    return ids;
  }

  RunConfig cfg_;
  std::optional<Corpus> corpus_;
  std::optional<std::vector<Claim>> claims_;
  std::optional<TfIdfIndex> index_;
};

int cmd_validate(Context& ctx) {
  const auto& corpus = ctx.corpus();
  const auto& claims = ctx.claims();
  std::size_t pairs = 0;
  std::size_t no_evidence_cited = 0;
  for (const auto& c : claims) {
    pairs += c.evidence.size();
    no_evidence_cited += c.no_evidence_but_cited();
  }
  std::cout << corpus.size() << " docs, " << claims.size() << " claims, " << pairs << " evidence pairs\n";
  std::cout << "max sentences per abstract: " << corpus.max_sentence_count()
            << "; claims without evidence but with cited docs: " << no_evidence_cited << "\n";
  return kExitOk;
}

int cmd_build_index(Context& ctx) {
  fs::create_directories(ctx.model_dir());
  const auto index = TfIdfIndex::build(ctx.corpus(), ctx.cfg().fields());
  index.save(ctx.model_file(artifact::kIndex).string());
  std::cout << "indexed " << index.doc_count() << " docs, " << index.vocabulary_size() << " terms -> "
            << ctx.model_file(artifact::kIndex).string() << "\n";
  return kExitOk;
}

void save_model(Context& ctx, const ClassifierModel& m, const char* name, std::size_t n_pairs) {
  const auto p = ctx.model_file(name);
  m.save(p.string());
  ctx.write_meta(fs::path(p.string() + ".meta.json"), {{"training_pairs", n_pairs}});
  std::cout << "wrote " << p.string() << " (" << n_pairs << " training pairs)\n";
}

int cmd_train(Context& ctx, const std::string& stage, const std::string& mode_override, bool multiclass) {
  const auto& cfg = ctx.cfg();
  const auto& corpus = ctx.corpus();
  const auto& claims = ctx.claims();
  fs::create_directories(ctx.model_dir());

  if (stage == "abstract") {
    const auto kind = cfg.repr_kind();
    std::optional<SizeGroupTable> table;
    if (kind == ReprKind::Diff5 || kind == ReprKind::Diff3) {
      table = learn_position_table(claims, corpus);
      table->save(ctx.model_file(artifact::kPositionTable).string());
    }
    const auto strategy = ReprStrategy::make(kind, table);
    const auto pairs = build_abstract_training_set(claims, corpus, ctx.index(), strategy, cfg.k(),
                                                   cfg.size_value("abstract", "neg_per_claim"));
    save_model(ctx, train(pairs, cfg.abstract_classifier()), artifact::kAbstract, pairs.size());
    return kExitOk;
  }

  if (stage == "rationale") {
    const auto mode = parse_rationale_mode(mode_override.empty() ? cfg.str("rationale", "mode") : mode_override);
    RationaleSetOptions opts;
    opts.retrieval = cfg.retrieval_options();
    opts.strategy = ctx.strategy();
    opts.false_retrieval_docs = cfg.size_value("rationale", "false_retrieval_docs");
    std::shared_ptr<PairScorer> abstract_scorer;
    if (mode == RationaleMode::LooseCoupling) {
      abstract_scorer =
          ctx.require_scorer(task::kAbstract, artifact::kAbstract, "loose-coupling needs: train --stage abstract");
      opts.abstract_scorer = abstract_scorer.get();
    }
    const auto pairs = build_rationale_training_set(mode, claims, corpus, ctx.index(), opts);
    save_model(ctx, train(pairs, cfg.rationale_classifier()), artifact::kRationale, pairs.size());
    return kExitOk;
  }

  if (stage == "stance") {
    StanceSetOptions opts;
    opts.k = cfg.k();
    opts.noinfo_docs = cfg.size_value("stance", "noinfo_docs");
    opts.source = cfg.stance_source();
    opts.rationale_threshold = cfg.rationale_classifier().threshold;
    opts.max_rationales = cfg.size_value("rationale", "max_rationales");
    std::shared_ptr<PairScorer> rationale_scorer;
    if (opts.source == StanceSource::Predicted) {
      rationale_scorer = ctx.require_scorer(task::kRationale, artifact::kRationale,
                                            "stance.negatives=predicted needs: train --stage rationale");
      opts.rationale_scorer = rationale_scorer.get();
    }
    const auto sets = build_stance_training_sets(claims, corpus, ctx.index(), opts);
    save_model(ctx, train(sets.noinfo, cfg.noinfo_classifier()), artifact::kNoInfo, sets.noinfo.size());
    save_model(ctx, train(sets.sr, cfg.sr_classifier()), artifact::kSr, sets.sr.size());
    if (multiclass || cfg.stance_mode() == StanceMode::Multiclass) {
      save_model(ctx, train(sets.multiclass, cfg.multiclass_classifier(), 3), artifact::kMulticlass,
                 sets.multiclass.size());
    }
    return kExitOk;
  }
  throw UsageError("unknown stage '" + stage + "' (expected abstract|rationale|stance)");
}

int cmd_predict(Context& ctx, bool emit_intermediate) {
  const auto& cfg = ctx.cfg();
  const auto& corpus = ctx.corpus();
  const auto& claims = ctx.claims();

  PipelineOptions opts;
  opts.retrieval = cfg.retrieval_options();
  opts.strategy = ctx.strategy();
  opts.rationale_threshold = cfg.rationale_classifier().threshold;
  opts.max_rationales = cfg.size_value("rationale", "max_rationales");
  opts.noinfo_threshold = cfg.noinfo_classifier().threshold;
  opts.sr_threshold = cfg.sr_classifier().threshold;
  opts.stance_mode = cfg.stance_mode();
  opts.workers = cfg.workers();

  const auto abstract = ctx.require_scorer(task::kAbstract, artifact::kAbstract, "train --stage abstract");
  const auto rationale = ctx.require_scorer(task::kRationale, artifact::kRationale, "train --stage rationale");
  std::shared_ptr<PairScorer> noinfo;
  std::shared_ptr<PairScorer> sr;
  std::optional<ClassifierModel> multiclass_model;
  PipelineModels models;
  models.abstract = abstract.get();
  models.rationale = rationale.get();
  if (opts.stance_mode == StanceMode::TwoStep) {
    noinfo = ctx.require_scorer(task::kStanceNoInfo, artifact::kNoInfo, "train --stage stance");
    sr = ctx.require_scorer(task::kStanceSr, artifact::kSr, "train --stage stance");
    models.noinfo = noinfo.get();
    models.sr = sr.get();
  } else {
    const auto p = ctx.model_file(artifact::kMulticlass);
    if (!fs::is_regular_file(p)) {
      throw DataError("missing prerequisite: " + p.string() + " (train --stage stance --multiclass)");
    }
    multiclass_model = ClassifierModel::load(p.string());
    models.multiclass = &*multiclass_model;
  }

  const auto result = run_pipeline(claims, corpus, ctx.index(), models, opts);

  fs::create_directories(ctx.output_dir());
  const auto pred_path = ctx.output_dir() / "predictions.jsonl";
  write_file(pred_path, to_jsonl(result.predictions));
  write_file(ctx.output_dir() / "predictions.config.json", cfg.json().dump(2) + "\n");
  ctx.write_meta(ctx.output_dir() / "predict.meta.json", {{"claims", claims.size()}});
  if (emit_intermediate) {
    std::string retrieved;
    std::string rationales;
    for (const auto& t : result.traces) {
      retrieved += retrieval_trace_to_json(t).dump() + "\n";
      rationales += rationale_trace_to_json(t).dump() + "\n";
    }
    write_file(ctx.output_dir() / "retrieved.jsonl", retrieved);
    write_file(ctx.output_dir() / "rationales.jsonl", rationales);
  }
  std::cout << "wrote " << result.predictions.size() << " predictions -> " << pred_path.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(Context& ctx, const std::string& predictions_path, const std::string& name) {
  Context::require_file("predictions (--predictions)", predictions_path);
  const auto& corpus = ctx.corpus();
  const auto& claims = ctx.claims();
  const auto preds = load_predictions(predictions_path);
  const auto trunc = ctx.cfg().size_value("eval", "rationale_truncation");
  const auto report = evaluate(claims, preds, trunc, &corpus);
  const auto table = render_report({{name, report}});

  fs::create_directories(ctx.output_dir());
  write_file(ctx.output_dir() / "report.txt", table);
  auto metrics = report_to_json(report);
  nlohmann::ordered_json doc;
  doc["system"] = name;
  for (const auto& [k, v] : metrics.items()) doc[k] = v;
  write_file(ctx.output_dir() / "metrics.json", doc.dump(2) + "\n");
  std::cout << table;
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& metric_files, const std::string& out_path) {
  if (metric_files.empty()) throw UsageError("report: give at least one --metrics file");
  std::map<std::string, MetricReport> reports;
  for (const auto& f : metric_files) {
    Context::require_file("metrics file", f);
    std::ifstream in(f);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("malformed metrics file " + f + ": " + e.what());
    }
    const auto name = j.contains("system") ? j.at("system").get<std::string>() : fs::path(f).stem().string();
    reports[name] = report_from_json(j);
  }
  const auto table = render_report(reports);
  if (!out_path.empty()) write_file(out_path, table);
  std::cout << table;
  return kExitOk;
}

// Applies --dotted.key value / --dotted.key=value pairs left over by CLI11.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos) {
      throw UsageError("unrecognized argument '" + a + "'");
    }
    auto body = a.substr(2);
    std::string value;
    if (const auto eq = body.find('='); eq != std::string::npos) {
      value = body.substr(eq + 1);
      body.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("option '" + a + "' needs a value");
      value = extras[++i];
    }
    cfg.set(body, value);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Scientific claim verification pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GlobalOptions g;
  const auto add_globals = [&g](CLI::App* sub) {
    sub->add_option("--config", g.config_path, "JSON config file");
    sub->add_option("--corpus", g.corpus, "corpus JSONL (paths.corpus)");
    sub->add_option("--claims", g.claims, "claims JSONL (paths.claims)");
    sub->add_option("--model-dir", g.model_dir, "model directory (paths.model_dir)");
    sub->add_option("--output-dir", g.output_dir, "output directory (paths.output_dir)");
    sub->add_option("--workers", g.workers, "worker threads, 0 = all processors");
    sub->add_option("--seed", g.seed, "random seed");
    sub->allow_extras();
  };

  auto* validate = app.add_subcommand("validate", "Load and validate corpus and claims");
  auto* build_index = app.add_subcommand("build-index", "Build and persist the TF-IDF index");
  auto* train_cmd = app.add_subcommand("train", "Train one pipeline stage");
  std::string stage;
  std::string mode;
  bool multiclass = false;
  train_cmd->add_option("--stage", stage, "abstract|rationale|stance")->required();
  train_cmd->add_option("--mode", mode, "rationale training regime");
  train_cmd->add_flag("--multiclass", multiclass, "also train the 3-way stance baseline");
  auto* predict = app.add_subcommand("predict", "Run the pipeline over the claims file");
  bool emit_intermediate = false;
  predict->add_flag("--emit-intermediate", emit_intermediate, "dump per-stage JSONL");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against gold claims");
  std::string predictions_path;
  std::string system_name = "rerrfact";
  evaluate_cmd->add_option("--predictions", predictions_path, "predictions JSONL")->required();
  evaluate_cmd->add_option("--name", system_name, "system name in the report");
  auto* report = app.add_subcommand("report", "Render a table from metrics JSON files");
  std::vector<std::string> metric_files;
  std::string report_out;
  report->add_option("--metrics", metric_files, "metrics JSON written by evaluate")->required();
  report->add_option("--out", report_out, "also write the table here");

  for (auto* sub : {validate, build_index, train_cmd, predict, evaluate_cmd, report}) add_globals(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : RunConfig::from_file(g.config_path);
  if (!g.corpus.empty()) cfg.set("paths.corpus", g.corpus);
  if (!g.claims.empty()) cfg.set("paths.claims", g.claims);
  if (!g.model_dir.empty()) cfg.set("paths.model_dir", g.model_dir);
  if (!g.output_dir.empty()) cfg.set("paths.output_dir", g.output_dir);
  if (g.workers) cfg.set("workers", std::to_string(*g.workers));
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  apply_overrides(cfg, active->remaining());

  Context ctx(std::move(cfg));
  if (active == validate) return cmd_validate(ctx);
  if (active == build_index) return cmd_build_index(ctx);
  if (active == train_cmd) return cmd_train(ctx, stage, mode, multiclass);
  if (active == predict) return cmd_predict(ctx, emit_intermediate);
  if (active == evaluate_cmd) return cmd_evaluate(ctx, predictions_path, system_name);
  if (active == report) return cmd_report(metric_files, report_out);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ScorerError& e) {
    std::cerr << "scorer error: " << e.what() << "\n";
    return kExitScorer;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
