#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lcmlai/cli.hpp"
#include "lcmlai/matrix_io.hpp"
#include "support.hpp"

using namespace lcmlai;
using lcmlai::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "lcmlai");
  std::ostringstream out, err;
  Outcome o;
  o.code = run_cli(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Small prepared corpus plus a config file with tiny dimensions.
struct Workspace {
  fs::path root;
  fs::path corpus;
  fs::path config;

  explicit Workspace(const std::string& tag) : root(scratch_dir(tag)), corpus(root / "corpus"), config(root / "run.json") {
    auto r = run({"prepare", "--synthetic", "--out-dir", corpus.string(), "--n-cases", "60", "--n-articles", "4",
                  "--n-pairs", "60", "--n-queries", "6", "--candidates-per-query", "8", "--min-support", "1"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::ofstream(config) << R"({"d_b": 8, "d_h": 8, "d_s": 8, "d_l": 8, "epochs": 1, "folds": 2,
                                 "learning_rate": 0.002})";
  }

  std::vector<std::string> common(const std::string& out) const {
    return {"--config", config.string(), "--corpus", corpus.string(), "--out-dir", (root / out).string()};
  }
};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("help and usage errors") {
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"train", "--no-such-flag"}).code == kExitUsage);
  }

  TEST_CASE("prepare reports a missing input directory") {
    auto dir = scratch_dir("cli_missing");
    auto r = run({"prepare", "--input", (dir / "absent").string(), "--out-dir", (dir / "out").string()});
    CHECK(r.code != kExitOk);
    CHECK(r.err.find((dir / "absent").string()) != std::string::npos);
  }

  TEST_CASE("synthetic prepare is deterministic and writes its config") {
    auto dir = scratch_dir("cli_synth");
    std::vector<std::string> base{"prepare", "--synthetic", "--seed", "5", "--n-cases", "40", "--n-pairs", "30",
                                  "--min-support", "1"};
    REQUIRE(run(cat(base, {"--out-dir", (dir / "a").string()})).code == 0);
    REQUIRE(run(cat(base, {"--out-dir", (dir / "b").string()})).code == 0);
    for (const char* f : {"cases.jsonl", "articles.jsonl", "pairs.jsonl", "summary.tsv"}) {
      CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    }
    CHECK(fs::exists(dir / "a" / "config.json"));
    CHECK(run({"prepare", "--synthetic", "--out-dir", (dir / "c").string(), "--thresholds", "2,1"}).code != 0);
  }

  TEST_CASE("unknown config keys are usage errors") {
    auto dir = scratch_dir("cli_badkey");
    std::ofstream(dir / "bad.json") << R"({"d_b": 8, "dropout_rate": 0.1})";
    auto r = run({"train", "--config", (dir / "bad.json").string(), "--out-dir", (dir / "o").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("dropout_rate") != std::string::npos);
  }

  TEST_CASE("train without the legal module says the article loss is disabled") {
    Workspace ws("cli_nolim");
    auto r = run(cat({"train", "--task", "lcm", "--variant", "no_lim", "--fold", "0"}, ws.common("model")));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("article loss disabled") != std::string::npos);
    const auto log = slurp(ws.root / "model" / "fold_0" / "train_log.tsv");
    CHECK(log.find("article loss disabled") != std::string::npos);
    CHECK(fs::exists(ws.root / "model" / "config.json"));
    auto cfg = nlohmann::json::parse(slurp(ws.root / "model" / "config.json"));
    CHECK(cfg.at("variant") == "no_lim");
    CHECK(cfg.at("d_b") == 8);
  }

  TEST_CASE("evaluate writes metric tables") {
    Workspace ws("cli_eval");
    REQUIRE(run(cat({"train", "--task", "lcr"}, ws.common("lcr"))).code == 0);
    auto r = run(cat({"evaluate", "--model-dir", (ws.root / "lcr").string()}, ws.common("lcr_eval")));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto csv = slurp(ws.root / "lcr_eval" / "metrics.csv");
    CHECK(first_line(csv) ==
          "fold,N@5,N@10,N@20,N@30,P@5,P@10,P@20,P@30,MAP,relevant_min_grade,excluded_queries");
    CHECK(csv.find("\nmean,") != std::string::npos);
    CHECK(fs::exists(ws.root / "lcr_eval" / "config.json"));

    REQUIRE(run(cat({"train", "--task", "lcm"}, ws.common("lcm"))).code == 0);
    r = run(cat({"evaluate", "--model-dir", (ws.root / "lcm").string()}, ws.common("lcm_eval")));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(first_line(slurp(ws.root / "lcm_eval" / "metrics.csv")) == "fold,Acc,MP,MR,F1");

    CHECK(run(cat({"evaluate", "--model-dir", (ws.root / "nowhere").string()}, ws.common("x"))).code == kExitUsage);
  }

  TEST_CASE("rerank reads the precomputed cache and encodes only queries") {
    Workspace ws("cli_rerank");
    REQUIRE(run(cat({"train", "--task", "lcr", "--fold", "0"}, ws.common("m"))).code == 0);
    const std::string ckpt = (ws.root / "m" / "fold_0" / "model.ckpt").string();
    const std::string cache = (ws.root / "cache").string();

    auto early = run({"rerank", "--model", ckpt, "--cache-dir", cache, "--out-dir", (ws.root / "r0").string()});
    CHECK(early.code == kExitUsage);
    CHECK(early.err.find("precompute") != std::string::npos);

    auto p = run({"precompute", "--model", ckpt, "--cache-dir", cache, "--jobs", "2"});
    REQUIRE_MESSAGE(p.code == 0, p.err);
    auto r = run({"rerank", "--model", ckpt, "--cache-dir", cache, "--out-dir", (ws.root / "r").string(), "--topk",
                  "5"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto stats = nlohmann::json::parse(slurp(ws.root / "r" / "rerank_stats.json"));
    CHECK(stats.at("encoder_calls") == stats.at("queries"));
    CHECK(stats.at("queries").get<int>() > 0);
    std::istringstream lines(slurp(ws.root / "r" / "rankings.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j.at("ranking").size() <= 5);
      ++n;
    }
    CHECK(n == stats.at("queries").get<int>());
  }

  TEST_CASE("explain exports the correlation matrices") {
    Workspace ws("cli_explain");
    REQUIRE(run(cat({"train", "--task", "lcm", "--fold", "0"}, ws.common("m"))).code == 0);
    const std::string ckpt = (ws.root / "m" / "fold_0" / "model.ckpt").string();
    Corpus corpus = load_corpus(ws.corpus, Schema::kGeneric);
    auto it = corpus.cases.begin();
    const Case& x = (it++)->second;
    const Case& y = it->second;

    const fs::path out = ws.root / "explain";
    auto r = run({"explain", "--model", ckpt, "--query", x.id, "--candidate", y.id, "--out-dir", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto n_x = static_cast<Index>(x.sentences.size());
    const auto n_y = static_cast<Index>(y.sentences.size());
    for (const char* name : {"semantic_correlation", "legal_correlation", "aia_weighted"}) {
      const MatrixXd m = read_matrix(out / (std::string(name) + ".txt"));
      CHECK(m.rows() == n_x);
      CHECK(m.cols() == n_y);
      CHECK(fs::exists(out / (std::string(name) + ".ppm")));
      // The text form must survive a write/read cycle.
      write_matrix(out / "again.txt", m);
      CHECK((read_matrix(out / "again.txt") - m).cwiseAbs().maxCoeff() <= 1e-6);
    }
    CHECK(fs::exists(out / "config.json"));

    const fs::path same = ws.root / "same";
    REQUIRE(run({"explain", "--model", ckpt, "--query", x.id, "--candidate", x.id, "--out-dir", same.string()}).code ==
            0);
    const MatrixXd legal = read_matrix(same / "legal_correlation.txt");
    for (Index i = 0; i < legal.rows(); ++i) CHECK(legal(i, i) == doctest::Approx(1.0).epsilon(1e-5));

    auto bad = run({"explain", "--model", ckpt, "--query", "no_such_case", "--candidate", y.id, "--out-dir",
                    (ws.root / "bad").string()});
    CHECK(bad.code != kExitOk);
    CHECK(bad.err.find("no_such_case") != std::string::npos);
  }
}
