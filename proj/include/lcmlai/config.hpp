#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "lcmlai/heads.hpp"
#include "lcmlai/losses.hpp"

namespace lcmlai {

/// Ablation variants of the full architecture.
enum class Variant {
  kFull,
  kNoAia,                   ///< X_f = X^(S) ⊕ X^(L)
  kNoLim,                   ///< X_f = X^(S), article loss disabled
  kNoBim,                   ///< X_f = X^(L) ⊕ X^(A)
  kOnlyAia,                 ///< X_f = X^(A)
  kLimNoAia,                ///< X_f = X^(L)
  kLegalUnit,               ///< legal correlation replaced by the identity pattern
  kLegalRandom,             ///< legal correlation replaced by seeded U(-1, 1)
  kLegalEmbeddingDistance,  ///< legal correlation from value-vector cosines
};

Variant parse_variant(std::string_view tag);
std::string_view to_string(Variant v);

/// Representation components each variant concatenates.
heads::Components components_of(Variant v);
inline bool uses_lim(Variant v) { return v != Variant::kNoLim; }
inline bool uses_bim(Variant v) { return components_of(v).semantic; }

enum class Task { kRetrieval, kMatching };
Task parse_task(std::string_view tag);
std::string_view to_string(Task t);

enum class Gain { kExponential, kLinear };

struct ModelConfig {
  Index d_b = 768;
  Index d_h = 768;
  Index d_s = 1536;
  Index d_l = 1536;
  double tau_a = 10.0;
  double tau_m = 20.0;
  int max_sentences = 15;
  int max_tokens = 150;
  Variant variant = Variant::kFull;
  double learning_rate = 3e-5;
  double weight_decay = 0.01;
  int batch_size = 8;
  int epochs = 50;
  std::uint64_t seed = 1;
  int folds = 5;
  bool enable_rationale = false;
  bool enable_align = false;
  /// Substitute gold article sets for predicted ones in AIA during training.
  bool teacher_forcing = false;
  /// Average (X, Y) and (Y, X) match probabilities at evaluation time.
  bool symmetric_eval = false;
  /// Lowest grade counted relevant for P@k / MAP; unset means the top grade.
  std::optional<int> relevant_min_grade;
  Gain ndcg_gain = Gain::kExponential;

  losses::LossConfig loss_config() const { return {tau_a, tau_m, enable_rationale, enable_align}; }

  /// Throws ConfigError on inconsistent dimensions or hyperparameters.
  void validate() const;
};

/// Full configuration of one CLI run; the JSON form is flat and strict.
struct RunConfig {
  ModelConfig model;
  Task task = Task::kMatching;
  std::string corpus;
  std::string schema = "generic";
  std::string out_dir;
  std::string cache_dir;
  /// "hash" for the hashed n-gram encoder, "store:<path>" for a
  /// precomputed embedding store.
  std::string encoder = "hash";
  std::string encoder_name;
  int min_support = 10;
  int topk = 100;
  int jobs = 1;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  /// Optional externally reported MAP printed next to ours in the CSV.
  std::optional<double> reference_map;
};

/// Throws ConfigError naming the first unknown key or ill-typed value.
RunConfig run_config_from_json(const std::string& text, RunConfig base = {});
std::string to_json(const RunConfig& cfg);
std::string to_json(const ModelConfig& cfg);

}  // namespace lcmlai
