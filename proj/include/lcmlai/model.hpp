#pragma once

// The full matching model: shared sentence-level semantic and legal
// interaction branches over precomputed sentence embeddings, the
// article-prediction subtask, and the classification / ranking heads.
//
// Everything a case contributes independently of its partner (embeddings,
// law distribution, value vectors, article predictions) is built by
// case_side(); interact() runs only the cross-case work, which is what makes
// candidate-side precomputation possible.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lcmlai/bim.hpp"
#include "lcmlai/config.hpp"
#include "lcmlai/heads.hpp"
#include "lcmlai/lim.hpp"
#include "lcmlai/losses.hpp"
#include "lcmlai/sha256.hpp"

namespace lcmlai {

template <typename Scalar>
using Var = ad::Var<Scalar>;

/// Partner-independent tensors of one case.
template <typename Scalar>
struct CaseSide {
  Var<Scalar> embeddings;  ///< n x d_b sentence embeddings
  Var<Scalar> mapped;      ///< MLP(embeddings), present when BIM is used
  bool has_lim = false;
  lim::ArticleDistribution<Scalar> distribution;
  Var<Scalar> cosines;        ///< n_L x 1, cos(rep_k, Proto_k)
  Var<Scalar> probabilities;  ///< n_L x 1
  std::vector<Index> predicted;

  Index sentence_count() const { return embeddings.rows(); }
};

/// All intermediates of one scored pair.
template <typename Scalar>
struct InteractionBundle {
  bool has_semantic = false;
  bim::InteractionResult<Scalar> semantic;
  bool has_legal = false;
  Var<Scalar> legal_correlation;
  bim::InteractionResult<Scalar> legal;
  lim::AiaResult<Scalar> x_aia;
  lim::AiaResult<Scalar> y_aia;
  Var<Scalar> x_final;
  Var<Scalar> y_final;
};

/// Identity pattern truncated to the n_x x n_y rectangle.
template <typename Scalar>
Matrix<Scalar> unit_correlation(Index rows, Index cols) {
  return Matrix<Scalar>::Identity(rows, cols);
}

/// U(-1, 1) entries; a pure function of (seed, rows, cols).
template <typename Scalar>
Matrix<Scalar> random_correlation(std::uint64_t seed, Index rows, Index cols) {
  Rng rng(seed * 0x100000001B3ULL ^ (static_cast<std::uint64_t>(rows) << 32) ^ static_cast<std::uint64_t>(cols));
  Matrix<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-1.0, 1.0));
  }
  return m;
}

template <typename Scalar>
class LcmLaiModel {
 public:
  /// `article_embeddings` rows follow `article_ids` (sorted by id).
  LcmLaiModel(const ModelConfig& config, const MatrixXd& article_embeddings, std::vector<std::string> article_ids,
              int label_levels)
      : config_(config), article_ids_(std::move(article_ids)), label_levels_(label_levels) {
    config_.validate();
    if (article_embeddings.rows() == 0) throw ValidationError("model needs at least one law article");
    if (article_embeddings.cols() != config_.d_b) {
      throw ConfigError("article embedding width " + std::to_string(article_embeddings.cols()) + " differs from d_b " +
                        std::to_string(config_.d_b));
    }
    if (static_cast<Index>(article_ids_.size()) != article_embeddings.rows()) {
      throw DimensionError("one article id per embedding row");
    }
    if (label_levels_ < 2) throw ConfigError("need at least two label levels");

    article_embeddings_ = article_embeddings.cast<Scalar>();
    article_var_ = ad::constant(article_embeddings_);

    Rng rng(config_.seed);
    bim_ = bim::BimParams<Scalar>(config_.d_b, config_.d_s, rng);
    lim_ = lim::LimParams<Scalar>(article_embeddings_, config_.d_h, config_.d_l, rng);
    const Index width = components_of(config_.variant).width(config_.d_s, config_.d_l);
    head_ = heads::MatchHeadParams<Scalar>(width, label_levels_, rng);
    rationale_head_ = nn::Linear<Scalar>(config_.d_h, losses::kRationaleClasses, true, rng);

    if (uses_bim(config_.variant)) bim_.register_parameters(params_, "bim");
    if (uses_lim(config_.variant)) lim_.register_parameters(params_, "lim");
    head_.register_parameters(params_, "head");
    if (config_.enable_rationale && uses_lim(config_.variant)) rationale_head_.register_parameters(params_, "rationale");
  }

  LcmLaiModel(const LcmLaiModel&) = delete;
  LcmLaiModel& operator=(const LcmLaiModel&) = delete;

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  int label_levels() const { return label_levels_; }
  Index article_count() const { return article_embeddings_.rows(); }
  const std::vector<std::string>& article_ids() const { return article_ids_; }
  const Matrix<Scalar>& article_embeddings() const { return article_embeddings_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }
  const bim::BimParams<Scalar>& bim_params() const { return bim_; }
  const lim::LimParams<Scalar>& lim_params() const { return lim_; }
  const heads::MatchHeadParams<Scalar>& head_params() const { return head_; }
  const nn::Linear<Scalar>& rationale_head() const { return rationale_head_; }

  Index final_width() const { return components_of(config_.variant).width(config_.d_s, config_.d_l); }

  /// Online path: embeddings straight from the encoder.
  CaseSide<Scalar> case_side(const MatrixXd& embeddings) const {
    check_embeddings(embeddings.rows(), embeddings.cols());
    Var<Scalar> emb = ad::constant<Scalar>(embeddings.cast<Scalar>());
    if (!uses_lim(config_.variant)) return assemble(emb, std::nullopt, std::nullopt);
    Var<Scalar> states = lim_.context(emb);
    auto [lambda, values] = lim::attention_scores(states, lim_.attention);
    return assemble(emb, lambda, values);
  }

  /// Cached path: rebuilds the same case side from stored tensors without
  /// running the encoder or the context recurrent network.
  CaseSide<Scalar> case_side_from_cache(const Matrix<Scalar>& embeddings, const Matrix<Scalar>& lambda,
                                        const Matrix<Scalar>& values) const {
    check_embeddings(embeddings.rows(), embeddings.cols());
    Var<Scalar> emb = ad::constant(embeddings);
    if (!uses_lim(config_.variant)) return assemble(emb, std::nullopt, std::nullopt);
    if (lambda.rows() != embeddings.rows() || lambda.cols() != article_count() || values.rows() != embeddings.rows() ||
        values.cols() != config_.d_h) {
      throw DimensionError("cached tensors do not match the model dimensions");
    }
    return assemble(emb, ad::constant(lambda), ad::constant(values));
  }

  /// Cross-case interaction. `gold_x` / `gold_y` replace the predicted article
  /// sets in AIA when given (teacher forcing).
  InteractionBundle<Scalar> interact(const CaseSide<Scalar>& x, const CaseSide<Scalar>& y,
                                     const std::vector<Index>* gold_x = nullptr,
                                     const std::vector<Index>* gold_y = nullptr) const {
    const auto use = components_of(config_.variant);
    InteractionBundle<Scalar> b;
    Var<Scalar> empty;
    Var<Scalar> sem_x = empty, sem_y = empty, leg_x = empty, leg_y = empty, aia_x = empty, aia_y = empty;

    if (use.semantic) {
      b.has_semantic = true;
      b.semantic = bim::semantic_interaction_encode(x.embeddings, y.embeddings, x.mapped, y.mapped, bim_);
      sem_x = b.semantic.x_rep;
      sem_y = b.semantic.y_rep;
    }
    if (use.legal || use.intervened) {
      b.has_legal = true;
      b.legal_correlation = legal_correlation(x, y);
      b.legal = lim::legal_interaction_encode(x.distribution.values, y.distribution.values, b.legal_correlation, lim_);
      leg_x = b.legal.x_rep;
      leg_y = b.legal.y_rep;
      if (use.intervened) {
        b.x_aia = lim::article_intervened_attention(b.legal.x_hidden, gold_x ? *gold_x : x.predicted,
                                                    article_embeddings_, lim_);
        b.y_aia = lim::article_intervened_attention(b.legal.y_hidden, gold_y ? *gold_y : y.predicted,
                                                    article_embeddings_, lim_);
        aia_x = b.x_aia.rep;
        aia_y = b.y_aia.rep;
      }
    }
    b.x_final = heads::final_representation(use, sem_x, leg_x, aia_x);
    b.y_final = heads::final_representation(use, sem_y, leg_y, aia_y);
    return b;
  }

  /// 1 x |Z| match-level distribution.
  Var<Scalar> match_probabilities(const InteractionBundle<Scalar>& b) const {
    return heads::match_classify(b.x_final, b.y_final, head_);
  }

  /// 1 x 1 cosine ranking score.
  Var<Scalar> retrieval_score(const InteractionBundle<Scalar>& b) const {
    return heads::retrieval_score(b.x_final, b.y_final);
  }

  /// ZLPR loss of one case against its gold article indicator vector; a
  /// constant 0 when the variant has no legal module.
  Var<Scalar> article_loss(const CaseSide<Scalar>& side, const std::vector<int>& labels) const {
    if (!side.has_lim) return ad::constant<Scalar>(Matrix<Scalar>::Zero(1, 1));
    return losses::tape::zlpr(side.cosines, labels, static_cast<Scalar>(config_.tau_a));
  }

  /// Rationale identification loss of one case (0 for unlabelled cases).
  Var<Scalar> rationale_loss(const CaseSide<Scalar>& side, const std::vector<int>& labels) const {
    if (!side.has_lim) return ad::constant<Scalar>(Matrix<Scalar>::Zero(1, 1));
    if (labels.empty()) return losses::tape::rationale<Scalar>(side.distribution.values, labels);
    return losses::tape::rationale(rationale_head_(side.distribution.values), labels);
  }

  /// KL between an alignment label matrix and the legal correlation.
  Var<Scalar> alignment_loss(const InteractionBundle<Scalar>& b, const Matrix<Scalar>& alignment) const {
    if (!b.has_legal) return ad::constant<Scalar>(Matrix<Scalar>::Zero(1, 1));
    return losses::tape::alignment_kl(b.legal_correlation, alignment);
  }

  /// SHA-256 over configuration, article table and every parameter value.
  std::string fingerprint() const {
    Sha256 h;
    h.update(to_json(config_));
    const std::uint64_t scalar_size = sizeof(Scalar);
    h.update(&scalar_size, sizeof(scalar_size));
    h.update(&label_levels_, sizeof(label_levels_));
    for (const auto& id : article_ids_) {
      h.update(id);
      h.update("\0", 1);
    }
    hash_matrix(h, article_embeddings_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      h.update(params_.name(i));
      hash_matrix(h, params_[i].value());
    }
    return to_hex(h.finish());
  }

  /// Copies of every parameter value, in registration order.
  std::vector<Matrix<Scalar>> snapshot() const {
    std::vector<Matrix<Scalar>> out;
    out.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) out.push_back(params_[i].value());
    return out;
  }

  void restore(const std::vector<Matrix<Scalar>>& values) {
    if (values.size() != params_.size()) throw DimensionError("restore: parameter count differs");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (values[i].rows() != params_[i].rows() || values[i].cols() != params_[i].cols()) {
        throw DimensionError("restore: shape of " + params_.name(i) + " differs");
      }
      params_[i].mutable_value() = values[i];
    }
  }

 private:
  void check_embeddings(Index rows, Index cols) const {
    if (rows == 0) throw DimensionError("case has no sentences");
    if (cols != config_.d_b) throw DimensionError("sentence embedding width differs from d_b");
  }

  CaseSide<Scalar> assemble(const Var<Scalar>& emb, const std::optional<Var<Scalar>>& lambda,
                            const std::optional<Var<Scalar>>& values) const {
    CaseSide<Scalar> side;
    side.embeddings = emb;
    if (uses_bim(config_.variant)) side.mapped = bim_.mlp(emb);
    if (lambda && values) {
      side.has_lim = true;
      side.distribution = lim::distribution_from_scores(*lambda, *values);
      Var<Scalar> protos = lim::prototypes(article_var_, lim_);
      side.cosines = lim::article_cosines(side.distribution.reps, protos);
      side.probabilities = ad::sigmoid(side.cosines);
      side.predicted = lim::predict_article_set(side.probabilities.value().col(0));
    }
    return side;
  }

  Var<Scalar> legal_correlation(const CaseSide<Scalar>& x, const CaseSide<Scalar>& y) const {
    const Index nx = x.sentence_count();
    const Index ny = y.sentence_count();
    switch (config_.variant) {
      case Variant::kLegalUnit: return ad::constant(unit_correlation<Scalar>(nx, ny));
      case Variant::kLegalRandom: return ad::constant(random_correlation<Scalar>(config_.seed, nx, ny));
      case Variant::kLegalEmbeddingDistance:
        return ad::pairwise_cosine(x.distribution.values, y.distribution.values);
      default: return lim::legal_correlation(x.distribution.lambda, y.distribution.lambda);
    }
  }

  static void hash_matrix(Sha256& h, const Matrix<Scalar>& m) {
    const std::int64_t shape[2] = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
    h.update(shape, sizeof(shape));
    h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(Scalar));
  }

  ModelConfig config_;
  std::vector<std::string> article_ids_;
  int label_levels_;
  Matrix<Scalar> article_embeddings_;
  Var<Scalar> article_var_;
  bim::BimParams<Scalar> bim_;
  lim::LimParams<Scalar> lim_;
  heads::MatchHeadParams<Scalar> head_;
  nn::Linear<Scalar> rationale_head_;
  nn::ParameterSet<Scalar> params_;
};

}  // namespace lcmlai
