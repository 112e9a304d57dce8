#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/fixture.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rerrfact_cli_") + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI inside the test directory; `env` is a prefix of VAR=value words.
  Result run(const std::string& args, const std::string& env = "") const {
    const std::string cmd =
        "cd " + quote(dir_.string()) + " && " + env + " " + quote(RERRFACT_CLI_PATH) + " " + args + " 2>&1";
    Result r;
    FILE* p = ::popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  void write(const std::string& name, const std::string& body) const { std::ofstream(dir_ / name) << body; }

  static std::string data_args() { return "--corpus corpus.jsonl --claims claims.jsonl"; }

  // Trains every stage on the fixture into models/.
  void train_all(const std::string& extra = "") const {
    fixture::write_files(dir_);
    for (const char* stage : {"abstract", "rationale", "stance"}) {
      const auto r = run(std::string("train --stage ") + stage + " " + data_args() + " " + extra);
      ASSERT_EQ(r.code, 0) << stage << ": " << r.out;
    }
  }

  fs::path dir_;
};

const char* kTinyCorpus =
    R"({"doc_id": 1, "title": "alpha", "abstract": ["a one.", "a two."]}
{"doc_id": 2, "title": "beta", "abstract": ["b one."]}
{"doc_id": 3, "title": "gamma", "abstract": ["c one.", "c two.", "c three."]}
)";

}  // namespace

TEST_F(Cli, ValidateCountsRecords) {
  write("corpus.jsonl", kTinyCorpus);
  write("claims.jsonl", R"({"id": 1, "claim": "x", "evidence": {"1": [{"sentences": [0], "label": "SUPPORT"}]}, "cited_doc_ids": [1]}
{"id": 2, "claim": "y", "evidence": {"3": [{"sentences": [2], "label": "CONTRADICT"}]}, "cited_doc_ids": [3]}
)");
  const auto r = run("validate " + data_args());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("3 docs, 2 claims, 2 evidence pairs"), std::string::npos) << r.out;
}

TEST_F(Cli, DataErrorNamesTheClaim) {
  write("corpus.jsonl", kTinyCorpus);
  write("claims.jsonl", R"({"id": 17, "claim": "x", "evidence": {"2": [{"sentences": [4], "label": "SUPPORT"}]}, "cited_doc_ids": [2]}
)");
  const auto r = run("validate " + data_args());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("claim 17"), std::string::npos) << r.out;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("validate --corpus missing.jsonl --claims missing.jsonl").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  write("corpus.jsonl", kTinyCorpus);
  write("claims.jsonl", "");
  EXPECT_EQ(run("train " + data_args()).code, 2);
  EXPECT_EQ(run("train --stage everything " + data_args()).code, 2);
  EXPECT_EQ(run("validate " + data_args() + " --retrieval.nope 3").code, 2);
  EXPECT_EQ(run("validate " + data_args() + " --retrieval.k").code, 2);
  EXPECT_EQ(run("validate " + data_args() + " --config missing.json").code, 2);
}

TEST_F(Cli, MissingPrerequisiteModel) {
  fixture::write_files(dir_);
  const auto r = run("train --stage rationale " + data_args());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("abstract.model"), std::string::npos) << r.out;
  const auto p = run("predict " + data_args());
  EXPECT_EQ(p.code, 1);
}

TEST_F(Cli, OracleRationaleTrainingNeedsNoAbstractModel) {
  fixture::write_files(dir_);
  const auto r = run("train --stage rationale --mode oracle " + data_args());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "models" / "rationale.model"));
}

TEST_F(Cli, BuildIndex) {
  fixture::write_files(dir_);
  const auto r = run("build-index " + data_args());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "models" / "index.json"));
  EXPECT_NE(r.out.find("indexed 20 docs"), std::string::npos) << r.out;
}

TEST_F(Cli, StanceStageWritesTwoModels) {
  fixture::write_files(dir_);
  ASSERT_EQ(run("train --stage stance " + data_args()).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "models" / "stance_noinfo.model"));
  EXPECT_TRUE(fs::exists(dir_ / "models" / "stance_sr.model"));
  EXPECT_FALSE(fs::exists(dir_ / "models" / "stance_multiclass.model"));
  ASSERT_EQ(run("train --stage stance --multiclass " + data_args()).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "models" / "stance_multiclass.model"));
  const auto meta = nlohmann::json::parse(slurp(dir_ / "models" / "stance_sr.model.meta.json"));
  EXPECT_TRUE(meta.contains("timestamp"));
  EXPECT_TRUE(meta.contains("config"));
}

TEST_F(Cli, FullRunIsDeterministicAndRecoversGold) {
  train_all();
  const auto first_models = slurp(dir_ / "models" / "abstract.model") + slurp(dir_ / "models" / "rationale.model") +
                            slurp(dir_ / "models" / "stance_sr.model");
  const auto r = run("predict --emit-intermediate " + data_args());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto first = slurp(dir_ / "out" / "predictions.jsonl");
  EXPECT_TRUE(fs::exists(dir_ / "out" / "retrieved.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "rationales.jsonl"));
  EXPECT_TRUE(fs::exists(dir_ / "out" / "predictions.config.json"));

  fs::remove_all(dir_ / "models");
  fs::remove_all(dir_ / "out");
  train_all();
  ASSERT_EQ(run("predict --workers 4 " + data_args()).code, 0);
  EXPECT_EQ(slurp(dir_ / "out" / "predictions.jsonl"), first);
  EXPECT_EQ(slurp(dir_ / "models" / "abstract.model") + slurp(dir_ / "models" / "rationale.model") +
                slurp(dir_ / "models" / "stance_sr.model"),
            first_models);

  const auto e = run("evaluate --predictions out/predictions.jsonl --name fixture " + data_args());
  ASSERT_EQ(e.code, 0) << e.out;
  const auto metrics = nlohmann::json::parse(slurp(dir_ / "out" / "metrics.json"));
  for (const char* fam : rerrfact::kFamilyKeys) EXPECT_EQ(metrics[fam]["f1"], 1.0) << fam;
  EXPECT_NE(slurp(dir_ / "out" / "report.txt").find("100.00"), std::string::npos);
}

TEST_F(Cli, MulticlassPrediction) {
  train_all();
  ASSERT_EQ(run("train --stage stance --multiclass " + data_args()).code, 0);
  const auto r = run("predict " + data_args() + " --stance.mode multiclass");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto cfg = nlohmann::json::parse(slurp(dir_ / "out" / "predictions.config.json"));
  EXPECT_EQ(cfg["stance"]["mode"], "multiclass");
}

TEST_F(Cli, EmptyClaimsGiveEmptyPredictions) {
  train_all();
  write("none.jsonl", "");
  const auto r = run("predict --corpus corpus.jsonl --claims none.jsonl");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(dir_ / "out" / "predictions.jsonl"), "");
}

TEST_F(Cli, EvaluateGoldAsPredictions) {
  fixture::write_files(dir_);
  const auto corpus = fixture::corpus();
  std::vector<rerrfact::ClaimPrediction> preds;
  for (const auto& c : fixture::claims(corpus)) {
    rerrfact::ClaimPrediction p{c.id, {}};
    for (const auto& e : c.evidence) p.evidence.push_back({e.doc_id, e.label, e.rationale_sentences()});
    preds.push_back(p);
  }
  write("gold_preds.jsonl", rerrfact::to_jsonl(preds));
  const auto r = run("evaluate --predictions gold_preds.jsonl " + data_args());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("100.00"), std::string::npos) << r.out;
  EXPECT_EQ(r.out.find(" 0.00"), std::string::npos) << r.out;
  EXPECT_EQ(run("evaluate --predictions nothing.jsonl " + data_args()).code, 2);

  write("dup.jsonl", R"({"id": 1, "evidence": {}}
{"id": 1, "evidence": {}}
)");
  EXPECT_EQ(run("evaluate --predictions dup.jsonl " + data_args()).code, 1);
}

TEST_F(Cli, ReportCombinesMetricFiles) {
  write("a.json", rerrfact::report_to_json(rerrfact::MetricReport{}).dump());
  auto perfect = rerrfact::MetricReport{};
  perfect.label_only = rerrfact::MetricFamily::from_pr(1, 1);
  auto doc = rerrfact::report_to_json(perfect);
  doc["system"] = "best";
  write("b.json", doc.dump());
  const auto r = run("report --metrics a.json b.json --out table.txt");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("best"), std::string::npos);
  EXPECT_NE(r.out.find("100.00"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "table.txt"), r.out);
  write("bad.json", "{}");
  EXPECT_EQ(run("report --metrics bad.json").code, 1);
  EXPECT_EQ(run("report --metrics gone.json").code, 2);
}

TEST_F(Cli, DottedOverridesReachTheConfig) {
  train_all();
  ASSERT_EQ(run("predict " + data_args() + " --abstract.max_abstracts 1 --retrieval.k=5").code, 0);
  const auto cfg = nlohmann::json::parse(slurp(dir_ / "out" / "predictions.config.json"));
  EXPECT_EQ(cfg["abstract"]["max_abstracts"], 1);
  EXPECT_EQ(cfg["retrieval"]["k"], 5);
  std::istringstream in(slurp(dir_ / "out" / "predictions.jsonl"));
  for (const auto& p : rerrfact::parse_predictions(in)) EXPECT_LE(p.evidence.size(), 1u);

  write("cfg.json", R"({"retrieval": {"k": 7}})");
  ASSERT_EQ(run("predict " + data_args() + " --config cfg.json").code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "out" / "predictions.config.json"))["retrieval"]["k"], 7);
}

TEST_F(Cli, ScorerFailureExitsWithThree) {
  train_all();
  const std::string env = "RERRFACT_SCORER_ABSTRACT=" + quote(std::string("exec:") + FAKE_SCORER_PATH + " error");
  const auto r = run("predict " + data_args(), env);
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_NE(r.out.find("claim 1"), std::string::npos) << r.out;
}

TEST_F(Cli, RemoteStanceScorerViaEnvironment) {
  train_all();
  ASSERT_EQ(run("predict " + data_args()).code, 0);
  const auto local = slurp(dir_ / "out" / "predictions.jsonl");
  fs::rename(dir_ / "models" / "stance_sr.model", dir_ / "sr_remote.model");
  fs::remove_all(dir_ / "out");
  EXPECT_EQ(run("predict " + data_args()).code, 1);
  const std::string env = "RERRFACT_SCORER_STANCE_SR=" +
                          quote(std::string("exec:") + FAKE_SCORER_PATH + " model-replay " +
                                (dir_ / "sr_remote.model").string());
  const auto r = run("predict " + data_args(), env);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(dir_ / "out" / "predictions.jsonl"), local);
}
