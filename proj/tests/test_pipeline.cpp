#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "lcmlai/pipeline.hpp"
#include "support.hpp"

using namespace lcmlai;
using lcmlai::testing::scratch_dir;
using lcmlai::testing::small_corpus;

namespace {

ModelConfig pipeline_config(Variant v = Variant::kFull, std::uint64_t seed = 1) {
  ModelConfig c;
  c.d_b = 16;
  c.d_h = 16;
  c.d_s = 16;
  c.d_l = 16;
  c.variant = v;
  c.seed = seed;
  c.learning_rate = 2e-3;
  c.epochs = 2;
  return c;
}

struct Fixture {
  Corpus corpus = small_corpus();
  HashEncoder enc{16};
  EmbeddingTable table = build_embeddings(corpus, enc);
};

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("folds partition the items with disjoint held-out fifths") {
    for (std::size_t n : {5u, 23u, 100u}) {
      auto folds = make_folds(n, 5, 3);
      REQUIRE(folds.size() == 5);
      std::multiset<std::size_t> held;
      for (const auto& f : folds) {
        std::set<std::size_t> all(f.train.begin(), f.train.end());
        for (auto i : f.validation) CHECK(all.insert(i).second);
        for (auto i : f.test) CHECK(all.insert(i).second);
        CHECK(all.size() == n);
        held.insert(f.validation.begin(), f.validation.end());
        held.insert(f.test.begin(), f.test.end());
      }
      CHECK(held.size() == n);
      CHECK(std::set<std::size_t>(held.begin(), held.end()).size() == n);
    }
    CHECK(make_folds(50, 5, 3)[2].test == make_folds(50, 5, 3)[2].test);
    CHECK(make_folds(50, 5, 3)[2].test != make_folds(50, 5, 4)[2].test);
    CHECK_THROWS_AS(make_folds(10, 1, 1), ConfigError);
  }

  TEST_CASE("zero epochs returns the initial model and an empty log") {
    Fixture fx;
    ModelConfig c = pipeline_config();
    c.epochs = 0;
    auto r = train(fx.corpus, fx.table, c, Task::kMatching, {iota(20), {}});
    CHECK(r.log.empty());
    CHECK(r.best_epoch == 0);
    CHECK(r.model->fingerprint() == make_model(c, fx.table, fx.corpus.label_levels)->fingerprint());
  }

  TEST_CASE("no_lim logs a zero article loss and says so") {
    Fixture fx;
    std::ostringstream progress;
    auto r = train(fx.corpus, fx.table, pipeline_config(Variant::kNoLim), Task::kMatching, {iota(30), iota(10)},
                   &progress);
    REQUIRE(r.log.size() == 2);
    for (const auto& e : r.log) CHECK(e.article_loss == 0.0);
    CHECK(progress.str().find("article loss disabled") != std::string::npos);
    auto dir = scratch_dir("trainlog");
    write_train_log(dir / "log.tsv", r, pipeline_config(Variant::kNoLim));
    std::ifstream in(dir / "log.tsv");
    std::string first;
    std::getline(in, first);
    CHECK(first.find("no_lim") != std::string::npos);
    CHECK(first.find("article loss disabled") != std::string::npos);
  }

  TEST_CASE("training without any article citations is an error") {
    Fixture fx;
    for (auto& [_, c] : fx.corpus.cases) c.cited_article_ids.clear();
    CHECK_THROWS_AS(train(fx.corpus, fx.table, pipeline_config(), Task::kMatching, {iota(10), {}}), TrainingError);
    CHECK_NOTHROW(train(fx.corpus, fx.table, pipeline_config(Variant::kNoLim), Task::kMatching, {iota(10), {}}));
  }

  TEST_CASE("training is deterministic for a seed") {
    Fixture fx;
    auto a = train(fx.corpus, fx.table, pipeline_config(), Task::kMatching, {iota(30), iota(10)});
    auto b = train(fx.corpus, fx.table, pipeline_config(), Task::kMatching, {iota(30), iota(10)});
    CHECK(a.model->fingerprint() == b.model->fingerprint());
    CHECK(a.log.back().loss == b.log.back().loss);
  }

  TEST_CASE("training loss falls over the first two epochs on at least 9 of 10 seeds") {
    int decreasing = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Corpus corpus = small_corpus(seed, 200, 120);
      HashEncoder enc(32);
      auto table = build_embeddings(corpus, enc);
      ModelConfig c = pipeline_config(Variant::kFull, seed);
      c.d_b = 32;
      c.learning_rate = ModelConfig{}.learning_rate;
      auto r = train(corpus, table, c, Task::kMatching, {iota(corpus.pairs.size()), {}});
      REQUIRE(r.log.size() == 2);
      decreasing += r.log[1].loss < r.log[0].loss ? 1 : 0;
    }
    // 10 of 10 at the time of writing.
    CHECK(decreasing >= 9);
  }

  TEST_CASE("retrieval training and evaluation") {
    Fixture fx;
    auto r = train(fx.corpus, fx.table, pipeline_config(), Task::kRetrieval, {{0, 1, 2, 3}, {4}});
    REQUIRE(r.log.size() == 2);
    auto rankings = rank_queries(*r.model, fx.corpus, fx.table, {4, 5});
    REQUIRE(rankings.size() == 2);
    CHECK(rankings[0].size() == fx.corpus.queries[4].candidates.size());
    for (std::size_t i = 1; i < rankings[0].size(); ++i) CHECK(rankings[0][i - 1].score >= rankings[0][i].score);
    auto rep = evaluate_ranking(*r.model, fx.corpus, fx.table, {4, 5});
    CHECK(rep.queries == 2);
    for (auto [k, v] : rep.ndcg) CHECK((v >= 0.0 && v <= 1.0));
    CHECK((rep.map >= 0.0 && rep.map <= 1.0));
  }

  TEST_CASE("matching evaluation and symmetric averaging") {
    Fixture fx;
    auto model = make_model(pipeline_config(), fx.table, fx.corpus.label_levels);
    auto rep = evaluate_matching(*model, fx.corpus, fx.table, iota(20));
    CHECK((rep.accuracy >= 0.0 && rep.accuracy <= 1.0));
    const auto& p = fx.corpus.pairs[0];
    auto d = match_distribution(*model, fx.table.of(p.query_id), fx.table.of(p.candidate_id));
    CHECK(d.sum() == doctest::Approx(1.0));
    ModelConfig sym = pipeline_config();
    sym.symmetric_eval = true;
    auto ms = make_model(sym, fx.table, fx.corpus.label_levels);
    auto ab = match_distribution(*ms, fx.table.of(p.query_id), fx.table.of(p.candidate_id));
    auto ba = match_distribution(*ms, fx.table.of(p.candidate_id), fx.table.of(p.query_id));
    CHECK((ab - ba).cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("relevant grade defaults to the top level") {
    ModelConfig c;
    CHECK(relevant_grade(c, 4) == 3);
    c.relevant_min_grade = 2;
    CHECK(relevant_grade(c, 4) == 2);
    c.relevant_min_grade = 4;
    CHECK_THROWS_AS(relevant_grade(c, 4), ConfigError);
  }

  TEST_CASE("sort_ranking breaks ties by id") {
    std::vector<ScoredCandidate> r{{"b", 0.5}, {"c", 0.9}, {"a", 0.5}};
    sort_ranking(r);
    CHECK(r[0].id == "c");
    CHECK(r[1].id == "a");
    CHECK(r[2].id == "b");
  }

  TEST_CASE("checkpoint round trip") {
    Fixture fx;
    auto model = make_model(pipeline_config(), fx.table, fx.corpus.label_levels);
    RunConfig run;
    run.model = pipeline_config();
    run.corpus = "somewhere";
    auto dir = scratch_dir("ckpt");
    save_checkpoint(dir / "m.ckpt", *model, run);
    auto back = load_checkpoint(dir / "m.ckpt");
    CHECK(back.model->fingerprint() == model->fingerprint());
    CHECK(back.run.corpus == "somewhere");
    CHECK(back.model->article_ids() == model->article_ids());
    std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), LoadError);
  }
}
