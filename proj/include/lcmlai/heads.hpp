#pragma once

#include <string>
#include <vector>

#include "lcmlai/autodiff.hpp"
#include "lcmlai/diagnostics.hpp"
#include "lcmlai/nn.hpp"

namespace lcmlai::heads {

template <typename Scalar>
using Var = ad::Var<Scalar>;

/// Which interaction representations a case's final vector concatenates, in
/// the fixed order semantic, legal, article-intervened.
struct Components {
  bool semantic = true;
  bool legal = true;
  bool intervened = true;

  Index width(Index d_s, Index d_l) const {
    return (semantic ? d_s : 0) + (legal ? d_l : 0) + (intervened ? d_l : 0);
  }
};

/// X_f = X^(S) ⊕ X^(L) ⊕ X^(A), restricted to the enabled components.
template <typename Scalar>
Var<Scalar> final_representation(const Components& use, const Var<Scalar>& semantic, const Var<Scalar>& legal,
                                 const Var<Scalar>& intervened) {
  std::vector<Var<Scalar>> parts;
  if (use.semantic) parts.push_back(semantic);
  if (use.legal) parts.push_back(legal);
  if (use.intervened) parts.push_back(intervened);
  if (parts.empty()) throw ConfigError("final representation has no components");
  return ad::hconcat(parts);
}

template <typename Scalar>
struct MatchHeadParams {
  nn::Linear<Scalar> classifier;  ///< 3 * width -> |Z|, no bias

  MatchHeadParams() = default;
  MatchHeadParams(Index final_width, Index label_levels, Rng& rng)
      : classifier(3 * final_width, label_levels, false, rng) {}

  Index label_levels() const { return classifier.out_dim(); }

  void register_parameters(nn::ParameterSet<Scalar>& set, const std::string& prefix) {
    classifier.register_parameters(set, prefix + ".classifier");
  }
};

/// The classifier input X_f ⊕ Y_f ⊕ |X_f - Y_f|.
template <typename Scalar>
Var<Scalar> match_features(const Var<Scalar>& x_final, const Var<Scalar>& y_final) {
  if (x_final.cols() != y_final.cols() || x_final.rows() != 1 || y_final.rows() != 1) {
    throw DimensionError("match_features: final representations differ in shape");
  }
  return ad::hconcat<Scalar>({x_final, y_final, ad::abs(ad::sub(x_final, y_final))});
}

/// softmax(W_p (X_f ⊕ Y_f ⊕ |X_f - Y_f|)), 1 x |Z|.
template <typename Scalar>
Var<Scalar> match_classify(const Var<Scalar>& x_final, const Var<Scalar>& y_final,
                           const MatchHeadParams<Scalar>& params) {
  Var<Scalar> features = match_features(x_final, y_final);
  if (features.cols() != params.classifier.in_dim()) throw DimensionError("match_classify: head width differs");
  return ad::softmax_rows(params.classifier(features));
}

/// cos(X_f, Y_f) as 1 x 1; zero-norm inputs score 0 and are counted.
template <typename Scalar>
Var<Scalar> retrieval_score(const Var<Scalar>& x_final, const Var<Scalar>& y_final) {
  if (x_final.cols() != y_final.cols()) throw DimensionError("retrieval_score: widths differ");
  if (x_final.value().squaredNorm() == Scalar(0) || y_final.value().squaredNorm() == Scalar(0)) {
    ++diagnostics().zero_norm_cosine;
  }
  return ad::pairwise_cosine(x_final, y_final);
}

template <typename Scalar>
Scalar retrieval_score(const RowVector<Scalar>& x_final, const RowVector<Scalar>& y_final) {
  ad::NoGradGuard guard;
  return retrieval_score(ad::constant<Scalar>(x_final), ad::constant<Scalar>(y_final)).item();
}

template <typename Scalar>
RowVector<Scalar> match_classify(const RowVector<Scalar>& x_final, const RowVector<Scalar>& y_final,
                                 const MatchHeadParams<Scalar>& params) {
  ad::NoGradGuard guard;
  return match_classify(ad::constant<Scalar>(x_final), ad::constant<Scalar>(y_final), params).value().row(0);
}

}  // namespace lcmlai::heads
