#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "figcap/cli.hpp"
#include "stub_server.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = figcap::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("figcap_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& content) {
    const auto path = (dir_ / name).string();
    std::ofstream(path) << content;
    return path;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string read(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static std::vector<nlohmann::json> read_lines(const std::string& p) {
    std::ifstream in(p);
    std::vector<nlohmann::json> out;
    for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
    return out;
  }

  fs::path dir_;
};

std::string record(const std::string& id, const std::string& mention, const std::string& paragraph,
                   const std::string& caption = "a caption") {
  return nlohmann::json{{"id", id},
                        {"caption", caption},
                        {"ocr", {"30}"}},
                        {"mentions", {mention}},
                        {"paragraph", paragraph}}
             .dump() +
         "\n";
}

}  // namespace

TEST_F(CliTest, IngestReportsCounts) {
  const auto corpus = write("c.jsonl", record("a", "Figure 1 shows", "p.") +
                                           record("b", "see Table 2", "p.") +
                                           record("c", "nothing here", "p."));
  const auto r = run({"ingest", corpus});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("records: 3"), std::string::npos);
  EXPECT_NE(r.out.find("mention coverage: 66.7% (2/3)"), std::string::npos);
  EXPECT_NE(r.out.find("ocr_alt coverage: 0.0%"), std::string::npos);
  EXPECT_NE(r.err.find("effective config"), std::string::npos);
}

TEST_F(CliTest, IngestBadLineAndMissingFile) {
  const auto corpus = write("c.jsonl", record("a", "Figure 1", "p.") + "{oops\n");
  const auto r = run({"ingest", corpus});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 2"), std::string::npos);
  EXPECT_EQ(run({"ingest", path("missing.jsonl")}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST_F(CliTest, RefineRuleModeIsDeterministic) {
  const auto corpus = write("c.jsonl",
                            record("a", "Figure 3", "Figure 4 is other. Figure 3 is ours.") +
                                record("b", "no ref", "Plain text."));
  ASSERT_EQ(run({"refine", corpus, "-o", path("r1.jsonl"), "--jobs", "3"}).code, 0);
  ASSERT_EQ(run({"refine", corpus, "-o", path("r2.jsonl"), "--jobs", "1"}).code, 0);
  EXPECT_EQ(read(path("r1.jsonl")), read(path("r2.jsonl")));
  const auto rows = read_lines(path("r1.jsonl"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("refined_paragraph"), "Figure 3 is ours.");
  EXPECT_EQ(rows[0].at("provenance"), "rule-based");
  EXPECT_EQ(rows[1].at("provenance"), "passthrough");
  EXPECT_TRUE(rows[1].at("target").is_null());
}

TEST_F(CliTest, RefineEmitsAssembledInput) {
  auto rec = nlohmann::json::parse(record("a", "Figure 1 here", "Figure 1 shows 300 units."));
  rec["ocr_alt"] = {"300"};
  const auto corpus = write("c.jsonl", rec.dump() + "\n");
  ASSERT_EQ(run({"refine", corpus, "-o", path("r.jsonl"), "--emit-input"}).code, 0);
  const auto rows = read_lines(path("r.jsonl"));
  EXPECT_EQ(rows[0].at("input"),
            "<ocr> 300 <mention> Figure 1 here <paragraph> Figure 1 shows 300 units.");
}

TEST_F(CliTest, RefineExternalMixedProvenance) {
  test::StubServer stub([](const std::string& body) {
    const auto content =
        nlohmann::json::parse(body)["messages"][0]["content"].get<std::string>();
    if (content.find("FAIL") != std::string::npos) return test::Reply{503, "busy"};
    return test::chat_reply("Figure 1 summary.");
  });
  const auto corpus = write("c.jsonl", record("a", "Figure 1", "Figure 1 text.") +
                                           record("b", "Figure 1", "FAIL Figure 1 text.") +
                                           record("c", "Figure 1", "Figure 1 text.") +
                                           record("d", "no ref", "FAIL here."));
  const auto r = run({"refine", corpus, "-o", path("r.jsonl"), "--mode", "external",
                      "--refiner-url", stub.url() + "/v1", "--response-log", path("log.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("external-llm: 2"), std::string::npos);
  EXPECT_NE(r.out.find("rule-based: 1"), std::string::npos);
  EXPECT_NE(r.out.find("passthrough: 1"), std::string::npos);
  EXPECT_EQ(read_lines(path("log.jsonl")).size(), 4u);
}

TEST_F(CliTest, RefineExternalDeadEndpointFallsBack) {
  std::string corpus_text;
  for (int i = 0; i < 5; ++i) {
    corpus_text += record("r" + std::to_string(i), "Fig. 2", "Fig. 2 shows x. Other stuff.");
  }
  const auto corpus = write("c.jsonl", corpus_text);
  const auto r = run({"refine", corpus, "-o", path("r.jsonl"), "--mode", "external",
                      "--refiner-url", "http://127.0.0.1:" + std::to_string(test::unused_port()),
                      "--refiner-timeout", "0.5"});
  ASSERT_EQ(r.code, 0);
  for (const auto& row : read_lines(path("r.jsonl"))) {
    EXPECT_EQ(row.at("provenance"), "rule-based");
    EXPECT_EQ(row.at("refined_paragraph"), "Fig. 2 shows x.");
  }
}

TEST_F(CliTest, ScoreIdentityAndMismatch) {
  const auto refs = write("refs.jsonl", "{\"id\":\"1\",\"caption\":\"loss over training epochs\"}\n"
                                        "{\"id\":\"2\",\"caption\":\"accuracy of three models\"}\n");
  const auto r = run({"score", "--predictions", refs, "--references", refs, "--normalizer",
                      "identity", "--label", "Base", "-o", path("s.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Base    1.000  1.000  1.000  1.000  1.000"), std::string::npos) << r.out;
  const auto report = nlohmann::json::parse(read(path("s.json")));
  EXPECT_EQ(report.at("rouge2_norm"), 1.0);
  EXPECT_EQ(report.at("label"), "Base");
  EXPECT_EQ(report.at("config").at("normalizer"), "identity");

  const auto preds = write("p.jsonl", "{\"id\":\"1\",\"caption\":\"x\"}\n{\"id\":\"3\",\"caption\":\"y\"}\n");
  const auto bad = run({"score", "--predictions", preds, "--references", refs});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("'2'"), std::string::npos);
}

TEST_F(CliTest, ScoreDisjointIsZero) {
  const auto refs = write("refs.jsonl", "{\"id\":\"1\",\"caption\":\"a b c d\"}\n");
  const auto preds = write("p.jsonl", "{\"id\":\"1\",\"caption\":\"w x y z\"}\n");
  const auto r = run({"score", "--predictions", preds, "--references", refs, "-o", path("s.json")});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(read(path("s.json")));
  for (const char* k : {"bleu4", "rouge1_f1", "rouge2_f1", "rouge1_norm", "rouge2_norm"}) {
    EXPECT_EQ(j.at(k), 0.0) << k;
  }
}

TEST_F(CliTest, FuseIdenticalFilesAndPipeIntoScore) {
  const auto f = write("m.jsonl", "{\"id\":\"1\",\"caption\":\"the loss curve\"}\n"
                                  "{\"id\":\"2\",\"caption\":\"accuracy bars\"}\n");
  const auto r = run({"fuse", f, f, f, "-o", path("fused.jsonl"), "--normalizer", "identity"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_lines(path("fused.jsonl"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("chosen_text"), "the loss curve");
  for (const auto& s : rows[1].at("scores")) EXPECT_NEAR(s.get<double>(), 2.0 / 3.0, 1e-12);

  const auto scored = run({"score", "--predictions", path("fused.jsonl"), "--references", f,
                           "--normalizer", "identity"});
  EXPECT_EQ(scored.code, 0) << scored.err;
}

TEST_F(CliTest, FuseMissingIdFails) {
  const auto a = write("a.jsonl", "{\"id\":\"1\",\"caption\":\"x\"}\n{\"id\":\"2\",\"caption\":\"y\"}\n");
  const auto b = write("b.jsonl", "{\"id\":\"1\",\"caption\":\"x\"}\n");
  const auto r = run({"fuse", a, b, "-o", path("f.jsonl")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("'2'"), std::string::npos);
}

TEST_F(CliTest, RankGammaZeroAndSingleCandidates) {
  const auto sets = write(
      "c.jsonl",
      R"({"id":"a","reference":"the loss drops","reference_logprobs":[-0.5,-1.0,-0.25],)"
      R"("candidates":[{"text":"the loss","logprobs":[-0.2,-0.1]},{"text":"loss drops fast","logprobs":[-0.3,-0.3,-0.9]}]})"
      "\n"
      R"({"id":"b","reference":"accuracy","reference_logprobs":[-2.0],)"
      R"("candidates":[{"text":"accuracy","logprobs":[-0.1]}]})"
      "\n");
  const auto r = run({"rank", sets, "-o", path("l.jsonl"), "--gamma", "0", "--lambda", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary.at("mean_l_mul"), summary.at("mean_l_xent"));
  const auto rows = read_lines(path("l.jsonl"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].at("l_ctr"), 0.0);
  EXPECT_EQ(rows[0].at("f_values").size(), 2u);
  EXPECT_EQ(rows[0].at("rank_order").size(), 2u);

  const auto bad = write("bad.jsonl", R"({"id":"a","reference":"x","reference_logprobs":[-1],)"
                                      R"("candidates":[{"text":"a b","logprobs":[-1]}]})"
                                      "\n");
  EXPECT_EQ(run({"rank", bad, "-o", path("l2.jsonl")}).code, 2);
}

TEST_F(CliTest, ReportRowsInOrderWithLabels) {
  const auto a = write("base.json", R"({"label":"Base","bleu4":0.11,"rouge1_f1":0.46,"rouge2_f1":0.28,"rouge1_norm":2.18,"rouge2_norm":3.806})");
  const auto b = write("combine.json", R"({"bleu4":0.08,"rouge1_f1":0.41,"rouge2_f1":0.25,"rouge1_norm":2.33,"rouge2_norm":4.49})");
  const auto r = run({"report", a, b});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "Method   Blue4    R-1    R-2  R-1-n  R-2-n\n"
            "Base     0.110  0.460  0.280  2.180  3.806\n"
            "combine  0.080  0.410  0.250  2.330  4.490\n");
  const auto relabeled = run({"report", a, "--label", "X", "--precision", "2"});
  EXPECT_NE(relabeled.out.find("X        0.11  0.46  0.28   2.18   3.81"), std::string::npos)
      << relabeled.out;
}

TEST_F(CliTest, SettingsPrecedence) {
  const auto config = write("cfg.json", R"({"normalizer":"identity","metric_n":3,"alpha":0.5})");
  ::setenv("FIGCAP_METRIC_N", "4", 1);
  auto settings = figcap::cli::resolve_settings(config, {{"alpha", "2.0"}});
  ::unsetenv("FIGCAP_METRIC_N");
  EXPECT_EQ(settings.at("normalizer"), "identity");  // config over default
  EXPECT_EQ(settings.at("metric_n"), 4);             // env over config
  EXPECT_EQ(settings.at("alpha"), 2.0);              // flag over config

  const auto unknown = write("bad.json", R"({"nope":1})");
  EXPECT_THROW(figcap::cli::resolve_settings(unknown, {}), figcap::FormatError);
  EXPECT_THROW(figcap::cli::resolve_settings("", {{"jobs", "-2"}}), figcap::InvalidArgument);
}

TEST_F(CliTest, BadNormalizerFlagExitsTwo) {
  const auto refs = write("r.jsonl", "{\"id\":\"1\",\"caption\":\"a\"}\n");
  EXPECT_EQ(run({"score", "--predictions", refs, "--references", refs, "--normalizer", "zz"}).code, 2);
}
