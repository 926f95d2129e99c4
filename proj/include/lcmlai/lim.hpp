#pragma once

// Legal interaction: article-aware attention over per-article memory vectors,
// the prototype classifier of the article-prediction subtask, the
// law-distribution correlation between sentences, the legal interaction
// encoder, and article-intervened attention (AIA).

#include <string>
#include <vector>

#include "lcmlai/bim.hpp"
#include "lcmlai/diagnostics.hpp"

namespace lcmlai::lim {

template <typename Scalar>
using Var = ad::Var<Scalar>;

template <typename Scalar>
struct ArticleAttentionParams {
  Var<Scalar> memories;  ///< n_L x d_b, one learnable vector per article
  nn::Linear<Scalar> query;  ///< d_b -> d_h, applied to memories
  nn::Linear<Scalar> key;    ///< d_b -> d_h, applied to sentence states
  nn::Linear<Scalar> value;  ///< d_b -> d_h, applied to sentence states

  ArticleAttentionParams() = default;
  /// Memories start at the encoded article texts.
  ArticleAttentionParams(const Matrix<Scalar>& article_embeddings, Index d_h, Rng& rng)
      : memories(Var<Scalar>::parameter(article_embeddings)),
        query(article_embeddings.cols(), d_h, false, rng),
        key(article_embeddings.cols(), d_h, false, rng),
        value(article_embeddings.cols(), d_h, false, rng) {}

  Index article_count() const { return memories.rows(); }

  void register_parameters(nn::ParameterSet<Scalar>& set, const std::string& prefix) {
    set.add(prefix + ".memories", &memories);
    query.register_parameters(set, prefix + ".query");
    key.register_parameters(set, prefix + ".key");
    value.register_parameters(set, prefix + ".value");
  }
};

template <typename Scalar>
struct LimParams {
  nn::BiGru<Scalar> context;  ///< d_b -> d_b, before article attention
  ArticleAttentionParams<Scalar> attention;
  nn::Linear<Scalar> prototype;  ///< d_b -> d_h
  nn::BiGru<Scalar> legal;       ///< 2 d_h -> d_l
  nn::Linear<Scalar> w_h;        ///< d_l -> d_h
  nn::Linear<Scalar> w_phi;      ///< d_b -> d_h

  LimParams() = default;
  LimParams(const Matrix<Scalar>& article_embeddings, Index d_h, Index d_l, Rng& rng) {
    const Index d_b = article_embeddings.cols();
    context = nn::BiGru<Scalar>(d_b, d_b, rng);
    attention = ArticleAttentionParams<Scalar>(article_embeddings, d_h, rng);
    prototype = nn::Linear<Scalar>(d_b, d_h, true, rng);
    legal = nn::BiGru<Scalar>(2 * d_h, d_l, rng);
    w_h = nn::Linear<Scalar>(d_l, d_h, false, rng);
    w_phi = nn::Linear<Scalar>(d_b, d_h, false, rng);
  }

  void register_parameters(nn::ParameterSet<Scalar>& set, const std::string& prefix) {
    context.register_parameters(set, prefix + ".context");
    attention.register_parameters(set, prefix + ".attention");
    prototype.register_parameters(set, prefix + ".prototype");
    legal.register_parameters(set, prefix + ".legal");
    w_h.register_parameters(set, prefix + ".w_h");
    w_phi.register_parameters(set, prefix + ".w_phi");
  }
};

template <typename Scalar>
struct ArticleDistribution {
  Var<Scalar> lambda;  ///< n x n_L raw scores (q_k . k_i), the law distribution rows
  Var<Scalar> gamma;   ///< softmax of each lambda column over sentences
  Var<Scalar> values;  ///< n x d_h
  Var<Scalar> reps;    ///< n_L x d_h, rep_k = sum_i gamma_ik v_i
};

/// Attention scores and values only; `states` are context-encoded sentences.
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> attention_scores(const Var<Scalar>& states,
                                                     const ArticleAttentionParams<Scalar>& params) {
  if (states.rows() == 0) throw DimensionError("article_attention: case has no sentences");
  if (states.cols() != params.key.in_dim()) throw DimensionError("article_attention: state width differs from d_b");
  Var<Scalar> queries = params.query(params.memories);  // n_L x d_h
  Var<Scalar> keys = params.key(states);                // n x d_h
  Var<Scalar> lambda = ad::matmul(keys, ad::transpose(queries));
  return {lambda, params.value(states)};
}

/// Completes the distribution from raw scores and values, which is all a
/// candidate cache stores.
template <typename Scalar>
ArticleDistribution<Scalar> distribution_from_scores(const Var<Scalar>& lambda, const Var<Scalar>& values) {
  ArticleDistribution<Scalar> d;
  d.lambda = lambda;
  d.values = values;
  d.gamma = ad::softmax_cols(lambda);
  d.reps = ad::matmul(ad::transpose(d.gamma), values);
  return d;
}

template <typename Scalar>
ArticleDistribution<Scalar> article_attention(const Var<Scalar>& states, const ArticleAttentionParams<Scalar>& params) {
  auto [lambda, values] = attention_scores(states, params);
  return distribution_from_scores(lambda, values);
}

/// Proto_k = prototype(L_k), n_L x d_h.
template <typename Scalar>
Var<Scalar> prototypes(const Var<Scalar>& article_embeddings, const LimParams<Scalar>& params) {
  return params.prototype(article_embeddings);
}

/// cos(rep_k, Proto_k) as n_L x 1. Zero-norm rows give 0 and are counted.
template <typename Scalar>
Var<Scalar> article_cosines(const Var<Scalar>& reps, const Var<Scalar>& protos) {
  if (reps.rows() != protos.rows() || reps.cols() != protos.cols()) {
    throw DimensionError("article_cosines: reps and prototypes differ in shape");
  }
  for (Index k = 0; k < reps.rows(); ++k) {
    if (reps.value().row(k).squaredNorm() == Scalar(0) || protos.value().row(k).squaredNorm() == Scalar(0)) {
      ++diagnostics().zero_norm_cosine;
    }
  }
  return ad::rowwise_cosine(reps, protos);
}

/// P(L_k | X) = sigmoid(cos(rep_k, Proto_k)), n_L x 1.
template <typename Scalar>
Var<Scalar> article_probabilities(const Var<Scalar>& reps, const Var<Scalar>& protos) {
  return ad::sigmoid(article_cosines(reps, protos));
}

/// Indices k with probability strictly above `threshold`, ascending.
template <typename Derived>
std::vector<Index> predict_article_set(const Eigen::MatrixBase<Derived>& probs, double threshold = 0.5) {
  std::vector<Index> out;
  for (Index k = 0; k < probs.size(); ++k) {
    if (static_cast<double>(probs(k)) > threshold) out.push_back(k);
  }
  return out;
}

/// Same selection expressed as article ids; `ids[k]` names row k.
template <typename Derived>
std::vector<std::string> predict_article_ids(const Eigen::MatrixBase<Derived>& probs,
                                             const std::vector<std::string>& ids, double threshold = 0.5) {
  if (static_cast<Index>(ids.size()) != probs.size()) throw DimensionError("predict_article_ids: id count differs");
  std::vector<std::string> out;
  for (Index k : predict_article_set(probs, threshold)) out.push_back(ids[static_cast<std::size_t>(k)]);
  return out;
}

/// c(i, j) = cos(lambda_i^X, lambda_j^Y); zero-norm rows give 0.
template <typename Scalar>
Var<Scalar> legal_correlation(const Var<Scalar>& lambda_x, const Var<Scalar>& lambda_y) {
  if (lambda_x.cols() != lambda_y.cols()) throw DimensionError("legal_correlation: article counts differ");
  return ad::pairwise_cosine(lambda_x, lambda_y);
}

/// Legal interaction over value vectors, mirroring the semantic branch.
template <typename Scalar>
bim::InteractionResult<Scalar> legal_interaction_encode(const Var<Scalar>& values_x, const Var<Scalar>& values_y,
                                                        const Var<Scalar>& legal_corr, const LimParams<Scalar>& params) {
  if (values_x.cols() != values_y.cols()) throw DimensionError("legal_interaction_encode: value widths differ");
  return bim::cross_interaction(values_x, values_y, legal_corr, params.legal);
}

/// Mean embedding of the predicted articles; the mean over all articles when
/// nothing is predicted.
template <typename Scalar>
Matrix<Scalar> aia_context(const std::vector<Index>& predicted, const Matrix<Scalar>& article_embeddings) {
  if (article_embeddings.rows() == 0) throw DimensionError("aia_context: no articles");
  if (predicted.empty()) {
    ++diagnostics().empty_article_prediction;
    return article_embeddings.colwise().mean();
  }
  Matrix<Scalar> phi = Matrix<Scalar>::Zero(1, article_embeddings.cols());
  for (Index k : predicted) {
    if (k < 0 || k >= article_embeddings.rows()) throw DimensionError("aia_context: article index out of range");
    phi += article_embeddings.row(k);
  }
  return phi / static_cast<Scalar>(predicted.size());
}

template <typename Scalar>
struct AiaResult {
  Var<Scalar> psi;  ///< n x 1 attention over legal hidden states
  Var<Scalar> rep;  ///< 1 x d_l
};

/// psi = softmax_i((W_h h_i)^T (W_phi phi)), rep = sum_i psi_i h_i.
template <typename Scalar>
AiaResult<Scalar> article_intervened_attention(const Var<Scalar>& legal_hidden, const Matrix<Scalar>& context,
                                               const LimParams<Scalar>& params) {
  if (legal_hidden.rows() == 0) throw DimensionError("article_intervened_attention: no hidden states");
  Var<Scalar> keys = params.w_h(legal_hidden);                    // n x d_h
  Var<Scalar> probe = params.w_phi(ad::constant(context));         // 1 x d_h
  Var<Scalar> logits = ad::matmul(keys, ad::transpose(probe));     // n x 1
  AiaResult<Scalar> r;
  r.psi = ad::softmax_cols(logits);
  r.rep = ad::matmul(ad::transpose(r.psi), legal_hidden);
  return r;
}

template <typename Scalar>
AiaResult<Scalar> article_intervened_attention(const Var<Scalar>& legal_hidden, const std::vector<Index>& predicted,
                                               const Matrix<Scalar>& article_embeddings,
                                               const LimParams<Scalar>& params) {
  return article_intervened_attention(legal_hidden, aia_context(predicted, article_embeddings), params);
}

// Plain-matrix conveniences (no graph recorded).

template <typename Scalar>
Matrix<Scalar> legal_correlation(const Matrix<Scalar>& lambda_x, const Matrix<Scalar>& lambda_y) {
  ad::NoGradGuard guard;
  return legal_correlation(ad::constant(lambda_x), ad::constant(lambda_y)).value();
}

template <typename Scalar>
Vector<Scalar> article_probabilities(const Matrix<Scalar>& reps, const Matrix<Scalar>& protos) {
  ad::NoGradGuard guard;
  return article_probabilities(ad::constant(reps), ad::constant(protos)).value().col(0);
}

}  // namespace lcmlai::lim
