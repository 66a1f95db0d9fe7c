#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;
using gcl::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gcl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& name) const { return (dir_ / name).string(); }

  void make_data(const std::string& n_queries = "100", const std::string& docs = "20") {
    ASSERT_EQ(cli({"synth", "--out-dir", p("data"), "--n-queries", n_queries, "--docs-per-query", docs, "--seed", "3"})
                  .code,
              0);
    ASSERT_EQ(cli({"split", "--queries", p("data/queries.jsonl"), "--corpus", p("data/corpus.jsonl"), "--out",
                   p("data/split.jsonl"), "--seed", "3"})
                  .code,
              0);
  }

  std::vector<std::string> data_args() const {
    return {"--queries", p("data/queries.jsonl"), "--corpus", p("data/corpus.jsonl"), "--triplets",
            p("data/triplets.jsonl"), "--split", p("data/split.jsonl")};
  }

  Result train(const std::string& out_dir, std::vector<std::string> extra) {
    std::vector<std::string> args{"train"};
    for (const auto& a : data_args()) args.push_back(a);
    args.insert(args.end(), {"--out-dir", p(out_dir), "--epochs", "2", "--batch-size", "32", "--dim", "16",
                             "--buckets", "4096"});
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }

  Result eval(const std::string& ckpt, const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> args{"eval"};
    for (const auto& a : data_args()) args.push_back(a);
    args.insert(args.end(), {"--checkpoint", ckpt, "--out", out});
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpDocumentsFlags) {
  const auto r = cli({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--stw", "--stw-c", "--unweighted-reference", "--config", "--gamma-profile", "--lr"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"stw", "--no-such-flag", "1"}).code, 2);
}

TEST_F(CliTest, SynthDefaultsAreByteStable) {
  ASSERT_EQ(cli({"synth", "--out-dir", p("a")}).code, 0);
  ASSERT_EQ(cli({"synth", "--out-dir", p("b")}).code, 0);
  for (const char* f : {"queries.jsonl", "corpus.jsonl", "triplets.jsonl"}) {
    ASSERT_TRUE(fs::exists(dir_ / "a" / f));
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  const auto trip = lines_of(slurp(dir_ / "a" / "triplets.jsonl"));
  EXPECT_EQ(trip[0], R"({"format":"gcl-triplets","s_max":100.0,"version":1})");
  EXPECT_EQ(trip.size(), 1U + 1000U * 100U);
  EXPECT_EQ(lines_of(slurp(dir_ / "a" / "queries.jsonl"))[0], R"({"format":"gcl-queries","version":1})");
}

TEST_F(CliTest, SynthRejectsBadConfig) {
  const auto r = cli({"synth", "--out-dir", p("x"), "--docs-per-query", "0"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("docs_per_query"), std::string::npos);
  EXPECT_EQ(cli({"synth", "--out-dir", p("x"), "--spread", "abc"}).code, 2);
}

TEST_F(CliTest, SplitProportionsAndDeterminism) {
  make_data("10", "5");
  ASSERT_EQ(cli({"split", "--queries", p("data/queries.jsonl"), "--corpus", p("data/corpus.jsonl"), "--out",
                 p("again.jsonl"), "--seed", "3"})
                .code,
            0);
  EXPECT_EQ(slurp(dir_ / "data" / "split.jsonl"), slurp(dir_ / "again.jsonl"));
  const auto text = slurp(dir_ / "again.jsonl");
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("\"bucket\":\"train\""), 8U);
  EXPECT_EQ(count("\"bucket\":\"eval\""), 2U);
  EXPECT_EQ(count("\"bucket\":\"corpus1\""), count("\"bucket\":\"corpus2\""));
}

TEST_F(CliTest, SplitDuplicateIdIsConfigError) {
  {
    std::ofstream q(p("q.jsonl"));
    q << "{\"format\":\"gcl-queries\",\"version\":1}\n{\"query_id\":\"q7\",\"text\":\"a\"}\n"
      << "{\"query_id\":\"q7\",\"text\":\"b\"}\n";
    std::ofstream c(p("c.jsonl"));
    c << "{\"format\":\"gcl-corpus\",\"version\":1,\"dense_dims\":{}}\n{\"doc_id\":\"d1\",\"title\":\"x\"}\n";
  }
  const auto r = cli({"split", "--queries", p("q.jsonl"), "--corpus", p("c.jsonl"), "--out", p("s.jsonl")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("q7"), std::string::npos);
}

TEST_F(CliTest, TrainEvalSmoke) {
  const auto t0 = std::chrono::steady_clock::now();
  make_data();
  const auto t = train("run", {"--stw", "inverse"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto history = lines_of(slurp(dir_ / "run" / "metrics_history.csv"));
  EXPECT_EQ(history[0], "epoch,split,ndcg@10,err,rbp");
  EXPECT_EQ(history.size(), 1U + 2U * 4U);
  const auto e = eval(p("run/model.ckpt"), p("m.csv"), {"--json", p("m.json"), "--run-dir", p("runs")});
  ASSERT_EQ(e.code, 0) << e.err;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 60.0);
  const auto csv = lines_of(slurp(dir_ / "m.csv"));
  EXPECT_EQ(csv.size(), 1U + 4U * 3U);
  for (const char* s : {"in_domain", "novel_query", "novel_corpus", "zero_shot"}) {
    EXPECT_NE(slurp(dir_ / "m.csv").find(std::string("\n") + s + ",ndcg,10,"), std::string::npos) << s;
    EXPECT_TRUE(fs::exists(dir_ / "runs" / (std::string(s) + ".trec")));
  }
  EXPECT_TRUE(fs::exists(dir_ / "m.json"));

  // Extra cutoffs add rows.
  ASSERT_EQ(eval(p("run/model.ckpt"), p("m2.csv"), {"--ndcg-k", "5,10"}).code, 0);
  EXPECT_EQ(lines_of(slurp(dir_ / "m2.csv")).size(), 1U + 4U * 4U);
}

TEST_F(CliTest, ConstantOneMatchesUnweightedReference) {
  make_data("60", "10");
  ASSERT_EQ(train("a", {"--stw", "constant", "--stw-c", "1", "--eval-every", "0"}).code, 0);
  ASSERT_EQ(train("b", {"--unweighted-reference", "--eval-every", "0"}).code, 0);
  const auto a = slurp(dir_ / "a" / "loss_history.csv");
  EXPECT_GT(lines_of(a).size(), 2U);
  EXPECT_EQ(a, slurp(dir_ / "b" / "loss_history.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "model.ckpt"), slurp(dir_ / "b" / "model.ckpt"));
}

TEST_F(CliTest, HybridProfileRowsEqualFixedGammaRows) {
  make_data("60", "10");
  ASSERT_EQ(train("mf", {"--rhs-fields", "title:text,image_vec:dense", "--eval-every", "0"}).code, 0);
  const std::string ckpt = p("mf/model.ckpt");
  ASSERT_EQ(eval(ckpt, p("half.csv"), {"--gamma-r", "0.5,0.5"}).code, 0);
  ASSERT_EQ(eval(ckpt, p("title.csv"), {"--gamma-r", "1,0"}).code, 0);
  const auto h = eval(ckpt, p("hybrid.csv"),
                      {"--gamma-r", "0.5,0.5", "--gamma-profile", R"({"zero_shot": {"gamma_r": [1, 0]}})"});
  ASSERT_EQ(h.code, 0) << h.err;
  std::map<std::string, std::string> expected;
  for (const auto& l : lines_of(slurp(dir_ / "half.csv"))) {
    if (l.rfind("zero_shot", 0) != 0) expected[l.substr(0, l.find(',', l.find(',') + 1))] = l;
  }
  for (const auto& l : lines_of(slurp(dir_ / "title.csv"))) {
    if (l.rfind("zero_shot", 0) == 0) expected[l.substr(0, l.find(',', l.find(',') + 1))] = l;
  }
  const auto hybrid = lines_of(slurp(dir_ / "hybrid.csv"));
  ASSERT_EQ(hybrid.size(), 13U);
  for (std::size_t i = 1; i < hybrid.size(); ++i) {
    const auto& l = hybrid[i];
    EXPECT_EQ(l, expected.at(l.substr(0, l.find(',', l.find(',') + 1))));
  }
  EXPECT_EQ(eval(ckpt, p("x.csv"), {"--gamma-profile", R"({"cold": {"gamma_r": [1, 0]}})"}).code, 2);
}

TEST_F(CliTest, EvalErrors) {
  make_data("20", "5");
  EXPECT_EQ(eval(p("missing.ckpt"), p("m.csv"), {}).code, 2);
  {
    std::ofstream bad(p("bad.ckpt"), std::ios::binary);
    bad << "not a checkpoint";
  }
  EXPECT_EQ(eval(p("bad.ckpt"), p("m.csv"), {}).code, 3);
  EXPECT_EQ(eval(p("bad.ckpt"), p("nodir/m.csv"), {}).code, 2);
}

TEST_F(CliTest, ExitCodesForDataAndNumericalFailures) {
  make_data("20", "5");
  EXPECT_EQ(train("nan", {"--tau", "1e-310"}).code, 4);
  {
    std::ofstream t(p("data/triplets.jsonl"), std::ios::app);
    t << "{\"query_id\":\"q00000\",\"doc_id\":\"d00000\"}\n";
  }
  const auto r = train("bad", {});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("triplets.jsonl:"), std::string::npos);
}

TEST_F(CliTest, ConfigFileAndOverrides) {
  {
    std::ofstream c(p("cfg.json"));
    c << R"({"functions": ["inverse", "piecewise"], "s_max": 10, "stw-c": 2})";
  }
  const auto r = cli({"stw", "--config", p("cfg.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 1U + 2U * 10U);
  const auto o = cli({"stw", "--config", p("cfg.json"), "--s-max", "20"});
  EXPECT_EQ(lines_of(o.out).size(), 1U + 2U * 20U);
  {
    std::ofstream c(p("bad.json"));
    c << R"({"functions": "inverse", "epochs": 3})";
  }
  const auto bad = cli({"stw", "--config", p("bad.json")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("epochs"), std::string::npos);
  EXPECT_EQ(cli({"stw", "--config", p("missing.json")}).code, 2);
}

TEST_F(CliTest, StwCurves) {
  const auto r = cli({"stw"});
  ASSERT_EQ(r.code, 0);
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 501U);
  EXPECT_EQ(lines[0], "stw,s,weight");
  std::map<std::string, std::map<int, double>> w;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::istringstream in(lines[i]);
    std::string name, s, v;
    std::getline(in, name, ',');
    std::getline(in, s, ',');
    std::getline(in, v);
    w[name][std::stoi(s)] = std::stod(v);
  }
  EXPECT_EQ(w.size(), 5U);
  EXPECT_EQ(w["inverse"][100], 100.0);
  for (int s = 90; s <= 100; ++s) EXPECT_EQ(w["piecewise"][s], 100.0);
  EXPECT_LT(w["piecewise"][89], 100.0);
  EXPECT_EQ(cli({"stw", "--functions", "cubic"}).code, 2);
}

TEST_F(CliTest, Search) {
  make_data("40", "10");
  ASSERT_EQ(train("run", {"--eval-every", "0"}).code, 0);
  {
    std::ofstream c(p("one.jsonl"));
    c << "{\"format\":\"gcl-corpus\",\"version\":1,\"dense_dims\":{}}\n{\"doc_id\":\"only\",\"title\":\"x y\"}\n";
  }
  const auto one = cli({"search", "--checkpoint", p("run/model.ckpt"), "--corpus", p("one.jsonl"), "--query",
                        "anything", "--k", "1"});
  ASSERT_EQ(one.code, 0) << one.err;
  const auto ol = lines_of(one.out);
  ASSERT_EQ(ol.size(), 2U);
  EXPECT_EQ(ol[1].substr(0, 7), "1\tonly\t");

  const auto many = cli({"search", "--checkpoint", p("run/model.ckpt"), "--corpus", p("data/corpus.jsonl"),
                         "--query", "c0w1 c0w2", "--k", "15"});
  ASSERT_EQ(many.code, 0);
  const auto ml = lines_of(many.out);
  ASSERT_EQ(ml.size(), 16U);
  double prev = 1e300;
  std::string prev_id;
  for (std::size_t i = 1; i < ml.size(); ++i) {
    std::istringstream in(ml[i]);
    std::string rank, id;
    double score = 0;
    in >> rank >> id >> score;
    EXPECT_TRUE(score < prev || (score == prev && id > prev_id));
    prev = score;
    prev_id = id;
  }

  ASSERT_EQ(train("mf", {"--rhs-fields", "title:text,image_vec:dense", "--eval-every", "0"}).code, 0);
  EXPECT_EQ(cli({"search", "--checkpoint", p("mf/model.ckpt"), "--corpus", p("one.jsonl"), "--query", "x"}).code, 2);
}
