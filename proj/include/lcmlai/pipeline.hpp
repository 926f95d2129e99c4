#pragma once

// Training and evaluation harness around the float model.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lcmlai/config.hpp"
#include "lcmlai/data.hpp"
#include "lcmlai/encoder.hpp"
#include "lcmlai/metrics.hpp"
#include "lcmlai/model.hpp"

namespace lcmlai {

using Model = LcmLaiModel<float>;

/// Frozen sentence embeddings of every case plus the article table.
struct EmbeddingTable {
  std::map<std::string, MatrixXd> cases;
  MatrixXd articles;
  std::vector<std::string> article_ids;

  const MatrixXd& of(const std::string& case_id) const;
};

EmbeddingTable build_embeddings(const Corpus& corpus, const Encoder& enc);

/// Gold article indicator vector of a case in model row order.
std::vector<int> article_labels(const Case& c, const std::vector<std::string>& article_ids);
std::vector<Index> article_indices(const Case& c, const std::vector<std::string>& article_ids);

std::unique_ptr<Model> make_model(const ModelConfig& config, const EmbeddingTable& table, int label_levels);

// ------------------------------------------------------------------ folds

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Shuffles [0, n) with `seed` and cuts it into `folds` contiguous chunks.
/// Fold f holds out chunk f, split into a validation half and a test half;
/// held-out chunks never overlap across folds.
std::vector<FoldSplit> make_folds(std::size_t n, int folds, std::uint64_t seed);

// --------------------------------------------------------------- training

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double article_loss = 0.0;
  double main_loss = 0.0;
  /// Validation MAP (retrieval) or macro-F1 (matching); NaN without a
  /// validation set.
  double validation = 0.0;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochLog> log;
  /// 0 when no epoch ran.
  int best_epoch = 0;
};

/// Items are indices into corpus.pairs (matching) or corpus.queries
/// (retrieval).
struct TrainData {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

TrainResult train(const Corpus& corpus, const EmbeddingTable& table, const ModelConfig& config, Task task,
                  const TrainData& data, std::ostream* progress = nullptr);

void write_train_log(const std::filesystem::path& path, const TrainResult& result, const ModelConfig& config);

// ------------------------------------------------------------- evaluation

/// Match-level distribution of one ordered pair (averaged over both orders
/// when config.symmetric_eval is set).
Vector<double> match_distribution(const Model& model, const MatrixXd& x, const MatrixXd& y);
int predict_match(const Model& model, const MatrixXd& x, const MatrixXd& y);

metrics::MatchingReport evaluate_matching(const Model& model, const Corpus& corpus, const EmbeddingTable& table,
                                          const std::vector<std::size_t>& pair_indices);

struct ScoredCandidate {
  std::string id;
  double score = 0.0;
};

/// Sorts by descending score, ties by ascending id.
void sort_ranking(std::vector<ScoredCandidate>& ranking);

/// Ranks each query's candidate list with the retrieval head.
std::vector<std::vector<ScoredCandidate>> rank_queries(const Model& model, const Corpus& corpus,
                                                       const EmbeddingTable& table,
                                                       const std::vector<std::size_t>& query_indices);

int relevant_grade(const ModelConfig& config, int label_levels);

metrics::RankingReport evaluate_ranking(const Model& model, const Corpus& corpus, const EmbeddingTable& table,
                                        const std::vector<std::size_t>& query_indices);

// ------------------------------------------------------------ checkpoints

/// Binary checkpoint: the run configuration, label levels, article table and
/// every parameter by name.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const RunConfig& run);

struct Checkpoint {
  RunConfig run;
  std::unique_ptr<Model> model;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lcmlai
