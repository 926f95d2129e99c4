#include "lcmlai/cli.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcmlai/bm25.hpp"
#include "lcmlai/late_interaction.hpp"
#include "lcmlai/matrix_io.hpp"
#include "lcmlai/pipeline.hpp"

namespace lcmlai {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A usage problem detected after parsing (exit status 2).
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Flags {
  std::string config;
  std::string out_dir;
  std::string cache_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> task;
  std::optional<std::string> variant;
  std::optional<int> topk;
  std::optional<int> jobs;
  std::optional<int> min_support;
  std::optional<int> relevant_min_grade;
  std::optional<std::string> corpus;
  std::optional<std::string> encoder;
  std::optional<int> epochs;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
  cmd->add_option("--cache-dir", f.cache_dir, "Cache directory");
  cmd->add_option("--seed", f.seed, "Run seed");
  cmd->add_option("--task", f.task, "lcr or lcm");
  cmd->add_option("--variant", f.variant, "Ablation variant");
  cmd->add_option("--topk", f.topk, "First-stage depth");
  cmd->add_option("--jobs", f.jobs, "Worker threads");
  cmd->add_option("--min-support", f.min_support, "Minimum citing cases per article");
  cmd->add_option("--relevant-min-grade", f.relevant_min_grade, "Lowest grade counted relevant");
  cmd->add_option("--corpus", f.corpus, "Prepared corpus directory");
  cmd->add_option("--encoder", f.encoder, "hash or store:<path>");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// base -> --config file -> individual flags.
RunConfig resolve(RunConfig base, const Flags& f) {
  RunConfig c = f.config.empty() ? std::move(base) : run_config_from_json(read_file(f.config), std::move(base));
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (!f.cache_dir.empty()) c.cache_dir = f.cache_dir;
  if (f.seed) c.model.seed = *f.seed;
  if (f.task) c.task = parse_task(*f.task);
  if (f.variant) c.model.variant = parse_variant(*f.variant);
  if (f.topk) c.topk = *f.topk;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.min_support) c.min_support = *f.min_support;
  if (f.relevant_min_grade) c.model.relevant_min_grade = *f.relevant_min_grade;
  if (f.corpus) c.corpus = *f.corpus;
  if (f.encoder) c.encoder = *f.encoder;
  if (f.epochs) c.model.epochs = *f.epochs;
  if (c.topk < 1) throw ConfigError("topk must be positive");
  if (c.jobs < 1) throw ConfigError("jobs must be positive");
  if (c.min_support < 0) throw ConfigError("min_support must be nonnegative");
  c.model.validate();
  return c;
}

fs::path require_out_dir(const RunConfig& c) {
  if (c.out_dir.empty()) throw UsageError("--out-dir is required");
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

void write_config(const fs::path& dir, const RunConfig& c) {
  std::ofstream out(dir / "config.json", std::ios::trunc);
  out << to_json(c) << '\n';
}

Corpus load_prepared(const RunConfig& c) {
  if (c.corpus.empty()) throw UsageError("no corpus given (--corpus or \"corpus\" in the config)");
  if (!fs::is_directory(c.corpus)) throw UsageError("corpus directory not found: " + c.corpus);
  return load_corpus(c.corpus, parse_schema(c.schema), {c.model.max_sentences, c.model.max_tokens});
}

std::shared_ptr<const Encoder> encoder_for(const RunConfig& c) {
  return make_encoder(c.encoder, c.model.d_b, c.encoder_name, c.cache_dir);
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

std::size_t item_count(const Corpus& corpus, Task task) {
  return task == Task::kMatching ? corpus.pairs.size() : corpus.queries.size();
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  bool synthetic = false;
  std::string input;
  std::string schema;
  SyntheticOptions synth;
  std::string thresholds;
};

int cmd_prepare(const Flags& f, const PrepareArgs& a, std::ostream& out) {
  RunConfig c = resolve({}, f);
  if (!a.schema.empty()) c.schema = a.schema;
  const fs::path dir = require_out_dir(c);
  Corpus corpus;
  if (a.synthetic == !a.input.empty()) throw UsageError("give exactly one of --synthetic and --input");
  if (a.synthetic) {
    SyntheticOptions o = a.synth;
    if (f.seed) o.seed = *f.seed;
    if (!a.thresholds.empty()) {
      o.thresholds.clear();
      std::stringstream ss(a.thresholds);
      std::string t;
      while (std::getline(ss, t, ',')) o.thresholds.push_back(std::stoi(t));
    }
    corpus = make_synthetic_corpus(o);
  } else {
    if (!fs::is_directory(a.input)) throw UsageError("input directory not found: " + a.input);
    corpus = load_corpus(a.input, parse_schema(c.schema), {c.model.max_sentences, c.model.max_tokens});
  }
  corpus = filter_articles(std::move(corpus), c.min_support);
  save_corpus(corpus, dir);
  const std::string summary = corpus_summary(corpus);
  std::ofstream(dir / "summary.tsv", std::ios::trunc) << summary;
  c.corpus = dir.string();
  c.schema = "generic";
  write_config(dir, c);
  out << summary;
  return kExitOk;
}

// ------------------------------------------------------------------ train

int cmd_train(const Flags& f, std::optional<int> only_fold, std::ostream& out) {
  RunConfig c = resolve({}, f);
  const fs::path dir = require_out_dir(c);
  const Corpus corpus = load_prepared(c);
  const auto enc = encoder_for(c);
  const EmbeddingTable table = build_embeddings(corpus, *enc);
  const auto folds = make_folds(item_count(corpus, c.task), c.model.folds, c.model.seed);
  if (only_fold && (*only_fold < 0 || *only_fold >= c.model.folds)) throw UsageError("--fold out of range");

  json splits = json::array();
  for (const auto& s : folds) splits.push_back({{"train", s.train}, {"validation", s.validation}, {"test", s.test}});
  std::ofstream(dir / "splits.json", std::ios::trunc) << splits.dump() << '\n';
  write_config(dir, c);

  for (int k = 0; k < c.model.folds; ++k) {
    if (only_fold && k != *only_fold) continue;
    const fs::path fold_dir = dir / ("fold_" + std::to_string(k));
    fs::create_directories(fold_dir);
    out << "fold " << k << '\n';
    const auto& s = folds[static_cast<std::size_t>(k)];
    TrainResult r = train(corpus, table, c.model, c.task, {s.train, s.validation}, &out);
    write_train_log(fold_dir / "train_log.tsv", r, c.model);
    save_checkpoint(fold_dir / "model.ckpt", *r.model, c);
  }
  return kExitOk;
}

// --------------------------------------------------------------- evaluate

int cmd_evaluate(const Flags& f, const std::string& model_dir, std::ostream& out) {
  if (model_dir.empty()) throw UsageError("--model-dir is required");
  const fs::path mdir = model_dir;
  if (!fs::exists(mdir / "config.json")) throw UsageError("no training run in " + model_dir);
  RunConfig base = run_config_from_json(read_file(mdir / "config.json"));
  base.out_dir.clear();
  RunConfig c = resolve(base, f);
  const fs::path dir = require_out_dir(c);
  const Corpus corpus = load_prepared(c);
  const auto enc = encoder_for(c);
  const EmbeddingTable table = build_embeddings(corpus, *enc);
  const json splits = json::parse(read_file(mdir / "splits.json"));

  std::ostringstream csv;
  const bool ranking = c.task == Task::kRetrieval;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  if (ranking) {
    csv << "fold,N@5,N@10,N@20,N@30,P@5,P@10,P@20,P@30,MAP,relevant_min_grade,excluded_queries";
    if (c.reference_map) csv << ",reference_MAP";
  } else {
    csv << "fold,Acc,MP,MR,F1";
  }
  csv << '\n';
  int relevant = 0;
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const fs::path ckpt = mdir / ("fold_" + std::to_string(k)) / "model.ckpt";
    if (!fs::exists(ckpt)) continue;
    Checkpoint ck = load_checkpoint(ckpt);
    if (ck.model->variant() != c.model.variant) throw UsageError("--variant differs from the trained model");
    const auto test = splits[k].at("test").get<std::vector<std::size_t>>();
    std::vector<double> row;
    if (ranking) {
      // Metric switches come from the resolved configuration, not the checkpoint.
      ModelConfig m = ck.run.model;
      m.relevant_min_grade = c.model.relevant_min_grade;
      m.ndcg_gain = c.model.ndcg_gain;
      relevant = relevant_grade(m, corpus.label_levels);
      // Rankings do not depend on the metric switches, so score once.
      const auto rankings = rank_queries(*ck.model, corpus, table, test);
      std::vector<std::vector<int>> graded;
      for (std::size_t n = 0; n < rankings.size(); ++n) {
        std::map<std::string, int> rel;
        for (const auto& cand : corpus.queries[test[n]].candidates) rel[cand.id] = cand.relevance;
        std::vector<int> g;
        for (const auto& r : rankings[n]) g.push_back(rel[r.id]);
        graded.push_back(std::move(g));
      }
      const auto rep = metrics::ranking_report(graded, relevant, m.ndcg_gain);
      row = {rep.ndcg.at(5), rep.ndcg.at(10), rep.ndcg.at(20), rep.ndcg.at(30), rep.precision.at(5),
             rep.precision.at(10), rep.precision.at(20), rep.precision.at(30), rep.map,
             static_cast<double>(rep.excluded_from_map)};
    } else {
      const auto rep = evaluate_matching(*ck.model, corpus, table, test);
      row = {rep.accuracy, rep.macro_precision, rep.macro_recall, rep.macro_f1};
    }
    rows.push_back(row);
    names.push_back(std::to_string(k));
  }
  if (rows.empty()) throw UsageError("no fold checkpoints in " + model_dir);
  std::vector<double> mean(rows.front().size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) mean[i] += r[i] / static_cast<double>(rows.size());
  }
  rows.push_back(mean);
  names.push_back("mean");
  for (std::size_t n = 0; n < rows.size(); ++n) {
    csv << names[n];
    const auto& r = rows[n];
    if (ranking) {
      for (std::size_t i = 0; i < 9; ++i) csv << ',' << fixed2(r[i]);
      char excluded[32];
      std::snprintf(excluded, sizeof(excluded), "%g", r[9]);
      csv << ',' << relevant << ',' << excluded;
      if (c.reference_map) {
        char ref[32];
        std::snprintf(ref, sizeof(ref), "%.2f", *c.reference_map);
        csv << ',' << ref;
      }
    } else {
      for (double v : r) csv << ',' << fixed2(v);
    }
    csv << '\n';
  }
  std::ofstream(dir / "metrics.csv", std::ios::trunc) << csv.str();
  write_config(dir, c);
  out << csv.str();
  return kExitOk;
}

// ------------------------------------------------------------- precompute

Checkpoint load_model_arg(const std::string& path) {
  if (path.empty()) throw UsageError("--model is required");
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

RunConfig resolve_for_model(const Checkpoint& ck, const Flags& f) {
  RunConfig base = ck.run;
  base.out_dir.clear();
  base.cache_dir.clear();
  RunConfig c = resolve(base, f);
  if (c.model.variant != ck.model->config().variant) throw UsageError("--variant differs from the trained model");
  return c;
}

int cmd_precompute(const Flags& f, const std::string& model_path, std::ostream& out) {
  Checkpoint ck = load_model_arg(model_path);
  RunConfig c = resolve_for_model(ck, f);
  if (c.cache_dir.empty()) throw UsageError("--cache-dir is required");
  const Corpus corpus = load_prepared(c);
  const auto enc = encoder_for(c);
  std::vector<const Case*> cases;
  for (const auto& [_, k] : corpus.cases) cases.push_back(&k);
  precompute_candidates(cases, *ck.model, *enc, c.cache_dir, c.jobs);
  write_config(c.cache_dir, c);
  out << "cached " << cases.size() << " candidates in " << c.cache_dir << " (fingerprint "
      << ck.model->fingerprint().substr(0, 16) << ")\n";
  return kExitOk;
}

// ----------------------------------------------------------------- rerank

int cmd_rerank(const Flags& f, const std::string& model_path, const std::string& query_id, std::ostream& out) {
  Checkpoint ck = load_model_arg(model_path);
  RunConfig c = resolve_for_model(ck, f);
  if (c.cache_dir.empty()) throw UsageError("--cache-dir is required");
  const fs::path dir = require_out_dir(c);
  const Corpus corpus = load_prepared(c);
  const std::string fp = ck.model->fingerprint();
  const std::string manifest = manifest_fingerprint(c.cache_dir);
  if (manifest.empty()) throw UsageError("no candidate cache in " + c.cache_dir + "; run precompute first");
  if (manifest != fp) throw StaleCacheError("candidate cache in " + c.cache_dir + " was built by another model");
  // The query is encoded online; the embedding cache would hide that work.
  RunConfig enc_cfg = c;
  enc_cfg.cache_dir.clear();
  const auto enc = encoder_for(enc_cfg);
  const Bm25Index index = Bm25Index::from_corpus(corpus, c.bm25_k1, c.bm25_b);

  std::vector<std::pair<std::string, std::vector<std::string>>> work;  // query, pool
  auto pool_of = [&](const std::string& q) {
    std::vector<std::string> pool;
    for (const auto& rq : corpus.queries) {
      if (rq.query_id != q) continue;
      for (const auto& cand : rq.candidates) pool.push_back(cand.id);
    }
    return pool;
  };
  if (!query_id.empty()) {
    (void)corpus.case_by_id(query_id);  // throws on an unknown id
    work.emplace_back(query_id, pool_of(query_id));
  } else {
    for (const auto& rq : corpus.queries) work.emplace_back(rq.query_id, pool_of(rq.query_id));
  }
  if (work.empty()) throw UsageError("corpus has no ranking queries; pass --query");

  std::ofstream rankings(dir / "rankings.jsonl", std::ios::trunc);
  enc->reset_counters();
  for (const auto& [q, pool] : work) {
    const Case& query = corpus.case_by_id(q);
    // BM25 over the whole corpus, restricted to the query's pool when it has one.
    auto hits = index.search(case_text(query), corpus.cases.size(), {q});
    std::vector<CandidateCache> caches;
    const std::set<std::string> allowed(pool.begin(), pool.end());
    for (const auto& [id, _] : hits) {
      if (!allowed.empty() && !allowed.count(id)) continue;
      caches.push_back(load_cache(c.cache_dir, id, fp));
      if (static_cast<int>(caches.size()) >= c.topk) break;
    }
    const auto ranking = rerank_cached(query, caches, *ck.model, *enc);
    json line;
    line["query"] = q;
    line["ranking"] = json::array();
    for (const auto& r : ranking) line["ranking"].push_back({{"id", r.id}, {"score", r.score}});
    rankings << line.dump() << '\n';
  }
  json stats{{"queries", work.size()}, {"encoder_calls", enc->call_count()}, {"encoded_sentences", enc->sentence_count()}};
  std::ofstream(dir / "rerank_stats.json", std::ios::trunc) << stats.dump(2) << '\n';
  write_config(dir, c);
  out << "reranked " << work.size() << " queries; encoder calls " << enc->call_count() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- explain

void export_matrix(const fs::path& dir, const std::string& name, const MatrixXd& m) {
  write_matrix(dir / (name + ".txt"), m);
  write_heatmap(dir / (name + ".ppm"), m);
}

int cmd_explain(const Flags& f, const std::string& model_path, const std::string& x_id, const std::string& y_id,
                std::ostream& out) {
  Checkpoint ck = load_model_arg(model_path);
  RunConfig c = resolve_for_model(ck, f);
  const fs::path dir = require_out_dir(c);
  if (x_id.empty() || y_id.empty()) throw UsageError("--query and --candidate are required");
  const Corpus corpus = load_prepared(c);
  const auto enc = encoder_for(c);
  const Model& model = *ck.model;
  ad::NoGradGuard guard;
  const auto x = model.case_side(encode_case(corpus.case_by_id(x_id), *enc));
  const auto y = model.case_side(encode_case(corpus.case_by_id(y_id), *enc));
  const auto b = model.interact(x, y);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const Matrix<float>& m) {
    export_matrix(dir, name, m.cast<double>());
    written.push_back(name);
  };
  if (b.has_semantic) emit("semantic_correlation", b.semantic.correlation.value());
  if (b.has_legal) emit("legal_correlation", b.legal_correlation.value());
  if (x.has_lim) {
    emit("law_distribution_query", x.distribution.lambda.value());
    emit("law_distribution_candidate", y.distribution.lambda.value());
  }
  if (components_of(model.variant()).intervened) {
    // Legal correlation reweighted by both sides' AIA attention.
    const Matrix<float> w = b.x_aia.psi.value() * b.y_aia.psi.value().transpose();
    emit("aia_weighted", b.legal_correlation.value().cwiseProduct(w));
  }
  write_config(dir, c);
  out << "score " << model.retrieval_score(b).item() << '\n';
  for (const auto& n : written) out << "wrote " << (dir / (n + ".txt")).string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Legal case matching and retrieval with law-article interaction"};
  app.require_subcommand(1);
  Flags flags;

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Normalise a corpus or generate a synthetic one");
  add_common(prepare, flags);
  prepare->add_flag("--synthetic", prep.synthetic, "Generate a synthetic corpus");
  prepare->add_option("--input", prep.input, "Raw corpus directory");
  prepare->add_option("--schema", prep.schema, "generic, lecard, lecardv2, elam or ecail");
  prepare->add_option("--n-cases", prep.synth.n_cases);
  prepare->add_option("--n-articles", prep.synth.n_articles);
  prepare->add_option("--n-pairs", prep.synth.n_pairs);
  prepare->add_option("--n-queries", prep.synth.n_queries);
  prepare->add_option("--candidates-per-query", prep.synth.candidates_per_query);
  prepare->add_option("--thresholds", prep.thresholds, "Comma-separated overlap thresholds");

  std::optional<int> fold;
  auto* train_cmd = app.add_subcommand("train", "Train one model per fold");
  add_common(train_cmd, flags);
  train_cmd->add_option("--fold", fold, "Train only this fold");

  std::string model_dir;
  auto* evaluate = app.add_subcommand("evaluate", "Score every fold's test split");
  add_common(evaluate, flags);
  evaluate->add_option("--model-dir", model_dir, "Output directory of train");

  std::string model_path;
  auto* precompute = app.add_subcommand("precompute", "Cache candidate-side tensors");
  add_common(precompute, flags);
  precompute->add_option("--model", model_path, "Checkpoint");

  std::string query_id;
  std::string candidate_id;
  auto* rerank = app.add_subcommand("rerank", "BM25 first stage, cached late-interaction second stage");
  add_common(rerank, flags);
  rerank->add_option("--model", model_path, "Checkpoint");
  rerank->add_option("--query", query_id, "Only this query case");

  auto* explain = app.add_subcommand("explain", "Export correlation matrices and heatmaps for one pair");
  add_common(explain, flags);
  explain->add_option("--model", model_path, "Checkpoint");
  explain->add_option("--query", query_id, "Query case id");
  explain->add_option("--candidate", candidate_id, "Candidate case id");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(flags, prep, out);
    if (train_cmd->parsed()) return cmd_train(flags, fold, out);
    if (evaluate->parsed()) return cmd_evaluate(flags, model_dir, out);
    if (precompute->parsed()) return cmd_precompute(flags, model_path, out);
    if (rerank->parsed()) return cmd_rerank(flags, model_path, query_id, out);
    if (explain->parsed()) return cmd_explain(flags, model_path, query_id, candidate_id, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lcmlai
