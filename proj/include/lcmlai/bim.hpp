#pragma once

// Basic interaction: sentence-level semantic cross-attention between two cases.

#include <utility>

#include "lcmlai/autodiff.hpp"
#include "lcmlai/nn.hpp"

namespace lcmlai::bim {

template <typename Scalar>
using Var = ad::Var<Scalar>;

/// One MLP and one recurrent encoder, shared by the query and candidate side.
template <typename Scalar>
struct BimParams {
  nn::Mlp2<Scalar> mlp;  // d_b -> d_b -> d_b
  nn::BiGru<Scalar> rnn;  // 2 d_b -> d_s

  BimParams() = default;
  BimParams(Index d_b, Index d_s, Rng& rng) : mlp(d_b, d_b, d_b, rng), rnn(2 * d_b, d_s, rng) {}

  void register_parameters(nn::ParameterSet<Scalar>& set, const std::string& prefix) {
    mlp.register_parameters(set, prefix + ".mlp");
    rnn.register_parameters(set, prefix + ".rnn");
  }
};

/// c(i, j) = -||mx_i - my_j||_2 over already-mapped embeddings.
template <typename Scalar>
Var<Scalar> semantic_correlation_mapped(const Var<Scalar>& mapped_x, const Var<Scalar>& mapped_y) {
  if (mapped_x.rows() == 0 || mapped_y.rows() == 0) throw DimensionError("semantic_correlation: empty case");
  if (mapped_x.cols() != mapped_y.cols()) throw DimensionError("semantic_correlation: embedding widths differ");
  return ad::neg_pairwise_distance(mapped_x, mapped_y);
}

/// c(i, j) = -||MLP(x_i) - MLP(y_j)||_2.
template <typename Scalar>
Var<Scalar> semantic_correlation(const Var<Scalar>& x, const Var<Scalar>& y, const BimParams<Scalar>& params) {
  if (x.cols() != params.mlp.first.in_dim() || y.cols() != params.mlp.first.in_dim()) {
    throw DimensionError("semantic_correlation: embedding width does not match d_b");
  }
  return semantic_correlation_mapped(params.mlp(x), params.mlp(y));
}

template <typename Scalar>
struct InteractionWeights {
  Var<Scalar> alpha;  ///< softmax over each row
  Var<Scalar> beta;   ///< softmax down each column
};

template <typename Scalar>
InteractionWeights<Scalar> interaction_weights(const Var<Scalar>& correlation) {
  return {ad::softmax_rows(correlation), ad::softmax_cols(correlation)};
}

/// Intermediates of one cross-interaction branch.
template <typename Scalar>
struct InteractionResult {
  Var<Scalar> correlation;
  Var<Scalar> alpha;
  Var<Scalar> beta;
  Var<Scalar> x_inputs;  ///< x_i ⊕ sum_j alpha_ij y_j
  Var<Scalar> y_inputs;  ///< y_j ⊕ sum_i beta_ij x_i
  Var<Scalar> x_hidden;
  Var<Scalar> y_hidden;
  Var<Scalar> x_rep;  ///< element-wise max over x_hidden rows
  Var<Scalar> y_rep;
};

/// Cross-aggregates two sequences with the weights derived from `correlation`,
/// runs the shared recurrent encoder on each side and max-pools.
template <typename Scalar>
InteractionResult<Scalar> cross_interaction(const Var<Scalar>& x, const Var<Scalar>& y, const Var<Scalar>& correlation,
                                            const nn::BiGru<Scalar>& rnn) {
  if (correlation.rows() != x.rows() || correlation.cols() != y.rows()) {
    throw DimensionError("cross_interaction: correlation shape does not match the cases");
  }
  InteractionResult<Scalar> r;
  r.correlation = correlation;
  auto w = interaction_weights(correlation);
  r.alpha = w.alpha;
  r.beta = w.beta;
  r.x_inputs = ad::hconcat<Scalar>({x, ad::matmul(r.alpha, y)});
  r.y_inputs = ad::hconcat<Scalar>({y, ad::matmul(ad::transpose(r.beta), x)});
  r.x_hidden = rnn(r.x_inputs);
  r.y_hidden = rnn(r.y_inputs);
  r.x_rep = ad::max_rows(r.x_hidden);
  r.y_rep = ad::max_rows(r.y_hidden);
  return r;
}

/// Semantic interaction representations X^(S), Y^(S) and their intermediates.
/// `mapped_x` / `mapped_y` are MLP outputs when the caller already has them.
template <typename Scalar>
InteractionResult<Scalar> semantic_interaction_encode(const Var<Scalar>& x, const Var<Scalar>& y,
                                                      const Var<Scalar>& mapped_x, const Var<Scalar>& mapped_y,
                                                      const BimParams<Scalar>& params) {
  return cross_interaction(x, y, semantic_correlation_mapped(mapped_x, mapped_y), params.rnn);
}

template <typename Scalar>
InteractionResult<Scalar> semantic_interaction_encode(const Var<Scalar>& x, const Var<Scalar>& y,
                                                      const BimParams<Scalar>& params) {
  if (x.cols() != y.cols()) throw DimensionError("semantic_interaction_encode: embedding widths differ");
  return semantic_interaction_encode(x, y, params.mlp(x), params.mlp(y), params);
}

// Plain-matrix conveniences (no graph recorded).

template <typename Scalar>
Matrix<Scalar> semantic_correlation(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const BimParams<Scalar>& params) {
  ad::NoGradGuard guard;
  return semantic_correlation(ad::constant(x), ad::constant(y), params).value();
}

template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> interaction_weights(const Matrix<Scalar>& correlation) {
  ad::NoGradGuard guard;
  auto w = interaction_weights(ad::constant(correlation));
  return {w.alpha.value(), w.beta.value()};
}

}  // namespace lcmlai::bim
