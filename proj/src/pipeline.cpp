#include "lcmlai/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

#include "lcmlai/optim.hpp"

namespace lcmlai {

namespace fs = std::filesystem;

const MatrixXd& EmbeddingTable::of(const std::string& case_id) const {
  auto it = cases.find(case_id);
  if (it == cases.end()) throw ValidationError("no embeddings for case '" + case_id + "'");
  return it->second;
}

EmbeddingTable build_embeddings(const Corpus& corpus, const Encoder& enc) {
  EmbeddingTable t;
  for (const auto& [id, c] : corpus.cases) t.cases.emplace(id, encode_case(c, enc));
  t.articles = encode_articles(corpus, enc);
  t.article_ids = corpus.article_ids();
  return t;
}

std::vector<int> article_labels(const Case& c, const std::vector<std::string>& article_ids) {
  std::vector<int> labels(article_ids.size(), 0);
  for (std::size_t k = 0; k < article_ids.size(); ++k) labels[k] = c.cited_article_ids.count(article_ids[k]) ? 1 : 0;
  return labels;
}

std::vector<Index> article_indices(const Case& c, const std::vector<std::string>& article_ids) {
  std::vector<Index> out;
  for (std::size_t k = 0; k < article_ids.size(); ++k) {
    if (c.cited_article_ids.count(article_ids[k])) out.push_back(static_cast<Index>(k));
  }
  return out;
}

std::unique_ptr<Model> make_model(const ModelConfig& config, const EmbeddingTable& table, int label_levels) {
  return std::make_unique<Model>(config, table.articles, table.article_ids, label_levels);
}

// ------------------------------------------------------------------ folds

std::vector<FoldSplit> make_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("folds must be at least 2");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ 0xF01D5ULL);
  shuffle(order, rng);
  const auto f_count = static_cast<std::size_t>(folds);
  std::vector<FoldSplit> out(f_count);
  for (std::size_t f = 0; f < f_count; ++f) {
    const std::size_t lo = f * n / f_count;
    const std::size_t hi = (f + 1) * n / f_count;
    const std::size_t mid = lo + (hi - lo) / 2;
    for (std::size_t i = 0; i < n; ++i) {
      if (i < lo || i >= hi) out[f].train.push_back(order[i]);
      else if (i < mid) out[f].validation.push_back(order[i]);
      else out[f].test.push_back(order[i]);
    }
  }
  return out;
}

// --------------------------------------------------------------- training

namespace {

using V = ad::Var<float>;

struct StepLoss {
  V total;
  double article = 0.0;
  double main = 0.0;
};

class Trainer {
 public:
  Trainer(const Corpus& corpus, const EmbeddingTable& table, Model& model)
      : corpus_(corpus), table_(table), model_(model), cfg_(model.config()) {}

  // Side of one case plus its article loss term (when labelled).
  CaseSide<float> side(const std::string& id, std::vector<V>& article_terms) {
    CaseSide<float> s = model_.case_side(table_.of(id));
    const Case& c = corpus_.case_by_id(id);
    if (s.has_lim && !c.cited_article_ids.empty()) {
      article_terms.push_back(model_.article_loss(s, article_labels(c, table_.article_ids)));
    }
    if (s.has_lim && cfg_.enable_rationale && !c.rationales.empty()) {
      extra_terms_.push_back(model_.rationale_loss(s, c.rationales));
    }
    return s;
  }

  InteractionBundle<float> interact(const CaseSide<float>& x, const CaseSide<float>& y, const std::string& x_id,
                                    const std::string& y_id) {
    if (!cfg_.teacher_forcing) return model_.interact(x, y);
    const auto gx = article_indices(corpus_.case_by_id(x_id), table_.article_ids);
    const auto gy = article_indices(corpus_.case_by_id(y_id), table_.article_ids);
    return model_.interact(x, y, &gx, &gy);
  }

  StepLoss matching_step(const std::vector<std::size_t>& batch) {
    std::vector<V> main_terms;
    std::vector<V> article_terms;
    extra_terms_.clear();
    for (std::size_t idx : batch) {
      const CasePair& p = corpus_.pairs[idx];
      auto x = side(p.query_id, article_terms);
      auto y = side(p.candidate_id, article_terms);
      auto b = interact(x, y, p.query_id, p.candidate_id);
      main_terms.push_back(losses::tape::cross_entropy(model_.match_probabilities(b), p.label));
      if (cfg_.enable_align && !p.alignment.empty() && b.has_legal) {
        Matrix<float> a = Matrix<float>::Zero(x.sentence_count(), y.sentence_count());
        for (auto [i, j] : p.alignment) {
          if (i >= 0 && j >= 0 && i < a.rows() && j < a.cols()) a(i, j) = 1.0F;
        }
        extra_terms_.push_back(model_.alignment_loss(b, a));
      }
    }
    return combine(main_terms, article_terms);
  }

  StepLoss ranking_step(const RankingQuery& q, const std::vector<GradedCandidate>& chunk) {
    std::vector<V> article_terms;
    extra_terms_.clear();
    auto x = side(q.query_id, article_terms);
    std::vector<V> scores;
    std::vector<int> levels;
    for (const auto& c : chunk) {
      auto y = side(c.id, article_terms);
      scores.push_back(model_.retrieval_score(interact(x, y, q.query_id, c.id)));
      levels.push_back(c.relevance);
    }
    std::vector<V> main_terms{losses::tape::cosent(ad::vconcat(scores), levels, static_cast<float>(cfg_.tau_m))};
    // CoSENT is already a single batch-level term.
    return combine(main_terms, article_terms, 1.0F);
  }

 private:
  StepLoss combine(const std::vector<V>& main_terms, const std::vector<V>& article_terms, float main_scale = -1.0F) {
    StepLoss s;
    const float m_scale = main_scale > 0.0F ? main_scale : 1.0F / static_cast<float>(main_terms.size());
    V main = ad::sum_scalars(main_terms, m_scale);
    std::vector<V> parts{main};
    s.main = main.item();
    if (!article_terms.empty()) {
      V article = ad::sum_scalars(article_terms, 1.0F / static_cast<float>(article_terms.size()));
      s.article = article.item();
      parts.push_back(article);
    }
    for (const auto& e : extra_terms_) parts.push_back(e);
    s.total = ad::sum_scalars(parts);
    return s;
  }

  const Corpus& corpus_;
  const EmbeddingTable& table_;
  Model& model_;
  const ModelConfig& cfg_;
  std::vector<V> extra_terms_;
};

double validation_metric(const Model& model, const Corpus& corpus, const EmbeddingTable& table, Task task,
                         const std::vector<std::size_t>& items) {
  if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (task == Task::kMatching) return evaluate_matching(model, corpus, table, items).macro_f1;
  return evaluate_ranking(model, corpus, table, items).map;
}

}  // namespace

TrainResult train(const Corpus& corpus, const EmbeddingTable& table, const ModelConfig& config, Task task,
                  const TrainData& data, std::ostream* progress) {
  TrainResult result;
  result.model = make_model(config, table, corpus.label_levels);
  Model& model = *result.model;
  if (config.epochs == 0) return result;
  if (data.train.empty()) throw TrainingError("no training items");

  const auto& items = task == Task::kMatching ? corpus.pairs.size() : corpus.queries.size();
  for (std::size_t i : data.train) {
    if (i >= items) throw TrainingError("training item index out of range");
  }
  if (uses_lim(config.variant)) {
    bool any = false;
    auto labelled = [&](const std::string& id) { return !corpus.case_by_id(id).cited_article_ids.empty(); };
    for (std::size_t i : data.train) {
      if (task == Task::kMatching) {
        any = any || labelled(corpus.pairs[i].query_id) || labelled(corpus.pairs[i].candidate_id);
      } else {
        any = any || labelled(corpus.queries[i].query_id);
        for (const auto& c : corpus.queries[i].candidates) any = any || labelled(c.id);
      }
    }
    if (!any) throw TrainingError("article prediction is enabled but no training case cites an article");
  }

  optim::AdamW<float> opt(model.parameters(), config.learning_rate, config.weight_decay);
  Trainer trainer(corpus, table, model);
  Rng rng(config.seed ^ 0x7EA1ULL);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  double best = -std::numeric_limits<double>::infinity();
  std::vector<Matrix<float>> best_params;
  if (progress && !uses_lim(config.variant)) *progress << "article loss disabled (variant " << to_string(config.variant) << ")\n";

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = data.train;
    shuffle(order, rng);
    double loss_sum = 0.0, article_sum = 0.0, main_sum = 0.0;
    std::size_t steps = 0;
    auto run = [&](StepLoss s) {
      const double total = s.total.item();
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(steps + 1) +
                            " (article " + std::to_string(s.article) + ", main " + std::to_string(s.main) + ")");
      }
      opt.zero_grad();
      s.total.backward();
      opt.step();
      loss_sum += total;
      article_sum += s.article;
      main_sum += s.main;
      ++steps;
    };
    if (task == Task::kMatching) {
      for (std::size_t lo = 0; lo < order.size(); lo += batch) {
        std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), lo + batch)));
        run(trainer.matching_step(chunk));
      }
    } else {
      for (std::size_t qi : order) {
        const RankingQuery& q = corpus.queries[qi];
        std::vector<GradedCandidate> cands = q.candidates;
        shuffle(cands, rng);
        for (std::size_t lo = 0; lo < cands.size(); lo += batch) {
          std::vector<GradedCandidate> chunk(cands.begin() + static_cast<std::ptrdiff_t>(lo),
                                             cands.begin() + static_cast<std::ptrdiff_t>(std::min(cands.size(), lo + batch)));
          if (chunk.size() < 2) continue;
          run(trainer.ranking_step(q, chunk));
        }
      }
    }
    EpochLog e;
    e.epoch = epoch;
    const double n = steps > 0 ? static_cast<double>(steps) : 1.0;
    e.loss = loss_sum / n;
    e.article_loss = article_sum / n;
    e.main_loss = main_sum / n;
    e.validation = validation_metric(model, corpus, table, task, data.validation);
    result.log.push_back(e);
    if (progress) {
      *progress << "epoch " << epoch << " loss " << e.loss << " article " << e.article_loss << " main " << e.main_loss
                << " validation " << e.validation << '\n';
    }
    // Without validation data the last epoch wins.
    const double key = std::isnan(e.validation) ? static_cast<double>(epoch) : e.validation;
    if (key > best) {
      best = key;
      best_params = model.snapshot();
      result.best_epoch = epoch;
    }
  }
  model.restore(best_params);
  return result;
}

void write_train_log(const fs::path& path, const TrainResult& result, const ModelConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out << "# variant " << to_string(config.variant);
  if (!uses_lim(config.variant)) out << " (article loss disabled)";
  out << "\n# best_epoch " << result.best_epoch << '\n';
  out << "epoch\tloss\tarticle_loss\tmain_loss\tvalidation\n";
  char buf[160];
  for (const auto& e : result.log) {
    std::snprintf(buf, sizeof(buf), "%d\t%.9g\t%.9g\t%.9g\t%.9g\n", e.epoch, e.loss, e.article_loss, e.main_loss,
                  e.validation);
    out << buf;
  }
}

// ------------------------------------------------------------- evaluation

Vector<double> match_distribution(const Model& model, const MatrixXd& x, const MatrixXd& y) {
  ad::NoGradGuard guard;
  const auto sx = model.case_side(x);
  const auto sy = model.case_side(y);
  Vector<double> p = model.match_probabilities(model.interact(sx, sy)).value().row(0).transpose().cast<double>();
  if (model.config().symmetric_eval) {
    p += model.match_probabilities(model.interact(sy, sx)).value().row(0).transpose().cast<double>();
    p /= 2.0;
  }
  return p;
}

namespace {

int argmax_first(const Vector<double>& p) {
  Index best = 0;
  for (Index i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace

int predict_match(const Model& model, const MatrixXd& x, const MatrixXd& y) {
  return argmax_first(match_distribution(model, x, y));
}

metrics::MatchingReport evaluate_matching(const Model& model, const Corpus& corpus, const EmbeddingTable& table,
                                          const std::vector<std::size_t>& pair_indices) {
  ad::NoGradGuard guard;
  std::map<std::string, CaseSide<float>> sides;
  auto side = [&](const std::string& id) -> const CaseSide<float>& {
    auto it = sides.find(id);
    if (it == sides.end()) it = sides.emplace(id, model.case_side(table.of(id))).first;
    return it->second;
  };
  std::vector<int> gold;
  std::vector<int> pred;
  for (std::size_t i : pair_indices) {
    const CasePair& p = corpus.pairs.at(i);
    const auto& x = side(p.query_id);
    const auto& y = side(p.candidate_id);
    Vector<double> dist = model.match_probabilities(model.interact(x, y)).value().row(0).transpose().cast<double>();
    if (model.config().symmetric_eval) {
      dist += model.match_probabilities(model.interact(y, x)).value().row(0).transpose().cast<double>();
      dist /= 2.0;
    }
    gold.push_back(p.label);
    pred.push_back(argmax_first(dist));
  }
  return metrics::matching_report(gold, pred, model.label_levels());
}

void sort_ranking(std::vector<ScoredCandidate>& ranking) {
  std::sort(ranking.begin(), ranking.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

std::vector<std::vector<ScoredCandidate>> rank_queries(const Model& model, const Corpus& corpus,
                                                       const EmbeddingTable& table,
                                                       const std::vector<std::size_t>& query_indices) {
  ad::NoGradGuard guard;
  std::map<std::string, CaseSide<float>> sides;
  auto side = [&](const std::string& id) -> const CaseSide<float>& {
    auto it = sides.find(id);
    if (it == sides.end()) it = sides.emplace(id, model.case_side(table.of(id))).first;
    return it->second;
  };
  std::vector<std::vector<ScoredCandidate>> out;
  for (std::size_t qi : query_indices) {
    const RankingQuery& q = corpus.queries.at(qi);
    const auto& x = side(q.query_id);
    std::vector<ScoredCandidate> ranking;
    for (const auto& c : q.candidates) {
      ranking.push_back({c.id, static_cast<double>(model.retrieval_score(model.interact(x, side(c.id))).item())});
    }
    sort_ranking(ranking);
    out.push_back(std::move(ranking));
  }
  return out;
}

int relevant_grade(const ModelConfig& config, int label_levels) {
  const int g = config.relevant_min_grade.value_or(label_levels - 1);
  if (g < 1 || g >= label_levels) {
    throw ConfigError("relevant_min_grade must lie in [1, " + std::to_string(label_levels - 1) + "]");
  }
  return g;
}

metrics::RankingReport evaluate_ranking(const Model& model, const Corpus& corpus, const EmbeddingTable& table,
                                        const std::vector<std::size_t>& query_indices) {
  const auto rankings = rank_queries(model, corpus, table, query_indices);
  std::vector<std::vector<int>> graded;
  for (std::size_t n = 0; n < rankings.size(); ++n) {
    std::map<std::string, int> rel;
    for (const auto& c : corpus.queries[query_indices[n]].candidates) rel[c.id] = c.relevance;
    std::vector<int> g;
    for (const auto& r : rankings[n]) g.push_back(rel[r.id]);
    graded.push_back(std::move(g));
  }
  return metrics::ranking_report(graded, relevant_grade(model.config(), model.label_levels()),
                                 model.config().ndcg_gain);
}

// ------------------------------------------------------------ checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'L', 'C', 'M', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint64_t read_u64(std::istream& in, const fs::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) throw LoadError("truncated checkpoint " + path.string());
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const fs::path& path) {
  const auto n = read_u64(in, path);
  if (n > (1ULL << 30)) throw LoadError("corrupt checkpoint " + path.string());
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw LoadError("truncated checkpoint " + path.string());
  return s;
}

template <typename Scalar>
void write_matrix_bin(std::ostream& out, const Matrix<Scalar>& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
}

template <typename Scalar>
Matrix<Scalar> read_matrix_bin(std::istream& in, const fs::path& path) {
  const auto r = read_u64(in, path);
  const auto c = read_u64(in, path);
  if (r > (1ULL << 24) || c > (1ULL << 24)) throw LoadError("corrupt checkpoint " + path.string());
  Matrix<Scalar> m(static_cast<Index>(r), static_cast<Index>(c));
  if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)))) {
    throw LoadError("truncated checkpoint " + path.string());
  }
  return m;
}

}  // namespace

void save_checkpoint(const fs::path& path, const Model& model, const RunConfig& run) {
  RunConfig r = run;
  r.model = model.config();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(kCheckpointMagic, 8);
  write_string(out, to_json(r));
  write_u64(out, static_cast<std::uint64_t>(model.label_levels()));
  write_u64(out, model.article_ids().size());
  for (const auto& id : model.article_ids()) write_string(out, id);
  write_matrix_bin<double>(out, model.article_embeddings().cast<double>());
  const auto& params = model.parameters();
  write_u64(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_string(out, params.name(i));
    write_matrix_bin<float>(out, params[i].value());
  }
  if (!out) throw LoadError("short write to " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw LoadError(path.string() + " is not a checkpoint");
  }
  Checkpoint ck;
  ck.run = run_config_from_json(read_string(in, path));
  const auto levels = static_cast<int>(read_u64(in, path));
  const auto n_articles = read_u64(in, path);
  std::vector<std::string> ids;
  for (std::uint64_t k = 0; k < n_articles; ++k) ids.push_back(read_string(in, path));
  const MatrixXd articles = read_matrix_bin<double>(in, path);
  ck.model = std::make_unique<Model>(ck.run.model, articles, ids, levels);
  const auto count = read_u64(in, path);
  const auto& params = ck.model->parameters();
  if (count != params.size()) throw LoadError("checkpoint parameter count does not match its configuration");
  std::vector<Matrix<float>> values;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = read_string(in, path);
    if (name != params.name(i)) throw LoadError("checkpoint parameter '" + name + "' out of order");
    values.push_back(read_matrix_bin<float>(in, path));
  }
  ck.model->restore(values);
  return ck;
}

}  // namespace lcmlai
