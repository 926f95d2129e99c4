#pragma once

// Training objectives. Each loss is available as a plain function of Eigen
// inputs (value and, where training needs it, the analytic gradient) and as a
// tape node built on those same functions.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "lcmlai/autodiff.hpp"
#include "lcmlai/diagnostics.hpp"

namespace lcmlai::losses {

struct LossConfig {
  double tau_a = 10.0;  ///< article-prediction temperature
  double tau_m = 20.0;  ///< CoSENT temperature
  bool enable_rationale = false;
  bool enable_align = false;

  void validate() const {
    if (!(tau_a > 0.0) || !(tau_m > 0.0)) throw ConfigError("loss temperatures must be positive");
  }
};

/// log(1 + sum_k exp(a_k)) evaluated as a log-sum-exp over {0} U a.
/// If `weights` is given it receives d/da_k = softmax weight of a_k.
template <typename Scalar>
Scalar log1p_sum_exp(std::span<const Scalar> a, std::vector<Scalar>* weights = nullptr) {
  Scalar m = Scalar(0);
  for (Scalar v : a) m = std::max(m, v);
  Scalar total = std::exp(-m);
  for (Scalar v : a) total += std::exp(v - m);
  if (weights != nullptr) {
    weights->resize(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) (*weights)[k] = std::exp(a[k] - m) / total;
  }
  return m + std::log(total);
}

// ------------------------------------------------------------------- ZLPR

/// log(1 + sum_{pos} e^{-s_k}) + log(1 + sum_{neg} e^{s_k}) with s = tau * scores.
/// `labels` is binary; either side may be empty.
template <typename Scalar>
Scalar zlpr_loss(const Vector<Scalar>& scores, const std::vector<int>& labels, Scalar tau,
                 Vector<Scalar>* grad = nullptr) {
  if (static_cast<Index>(labels.size()) != scores.size()) throw DimensionError("zlpr_loss: label count differs");
  std::vector<Scalar> pos;
  std::vector<Scalar> neg;
  std::vector<Index> pos_idx;
  std::vector<Index> neg_idx;
  for (Index k = 0; k < scores.size(); ++k) {
    const int z = labels[static_cast<std::size_t>(k)];
    if (z != 0 && z != 1) throw ValidationError("zlpr_loss: labels must be 0 or 1");
    if (z == 1) {
      pos.push_back(-tau * scores(k));
      pos_idx.push_back(k);
    } else {
      neg.push_back(tau * scores(k));
      neg_idx.push_back(k);
    }
  }
  std::vector<Scalar> wp;
  std::vector<Scalar> wn;
  const Scalar value = log1p_sum_exp<Scalar>(pos, grad ? &wp : nullptr) +
                       log1p_sum_exp<Scalar>(neg, grad ? &wn : nullptr);
  if (grad != nullptr) {
    grad->setZero(scores.size());
    for (std::size_t i = 0; i < pos_idx.size(); ++i) (*grad)(pos_idx[i]) = -tau * wp[i];
    for (std::size_t i = 0; i < neg_idx.size(); ++i) (*grad)(neg_idx[i]) = tau * wn[i];
  }
  return value;
}

// ----------------------------------------------------------------- CoSENT

/// log(1 + sum over (hi, lo) with level(hi) > level(lo) of e^{tau (s_lo - s_hi)}).
/// Lower-level examples scored above higher-level ones are penalised.
template <typename Scalar>
Scalar cosent_loss(const Vector<Scalar>& scores, const std::vector<int>& levels, Scalar tau,
                   Vector<Scalar>* grad = nullptr) {
  if (static_cast<Index>(levels.size()) != scores.size()) throw DimensionError("cosent_loss: level count differs");
  std::vector<Scalar> terms;
  std::vector<std::pair<Index, Index>> pairs;  // (hi, lo)
  for (Index hi = 0; hi < scores.size(); ++hi) {
    for (Index lo = 0; lo < scores.size(); ++lo) {
      if (levels[static_cast<std::size_t>(hi)] > levels[static_cast<std::size_t>(lo)]) {
        terms.push_back(tau * (scores(lo) - scores(hi)));
        pairs.emplace_back(hi, lo);
      }
    }
  }
  std::vector<Scalar> w;
  const Scalar value = log1p_sum_exp<Scalar>(terms, grad ? &w : nullptr);
  if (grad != nullptr) {
    grad->setZero(scores.size());
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      (*grad)(pairs[p].second) += tau * w[p];
      (*grad)(pairs[p].first) -= tau * w[p];
    }
  }
  return value;
}

// ---------------------------------------------------------- cross-entropy

inline constexpr double kProbabilityFloor = 1e-12;

/// -sum_i z_i log(max(p_i, 1e-12)) for a one-hot (or soft) target z.
template <typename Scalar>
Scalar ce_loss(const Vector<Scalar>& pred, const Vector<Scalar>& gold) {
  if (pred.size() != gold.size()) throw DimensionError("ce_loss: sizes differ");
  Scalar total = Scalar(0);
  for (Index i = 0; i < pred.size(); ++i) {
    if (gold(i) != Scalar(0)) total -= gold(i) * std::log(std::max(pred(i), Scalar(kProbabilityFloor)));
  }
  return total;
}

template <typename Scalar>
Scalar ce_loss(const Vector<Scalar>& pred, int gold_class) {
  if (gold_class < 0 || gold_class >= pred.size()) throw ValidationError("ce_loss: gold class out of range");
  return -std::log(std::max(pred(gold_class), Scalar(kProbabilityFloor)));
}

// ------------------------------------------------------------------ total

/// Mean of the per-case article losses plus the main-task loss.
template <typename Scalar>
Scalar total_loss(std::span<const Scalar> article_losses, Scalar main_loss) {
  Scalar mean = Scalar(0);
  for (Scalar v : article_losses) mean += v;
  if (!article_losses.empty()) mean /= static_cast<Scalar>(article_losses.size());
  return mean + main_loss;
}

// --------------------------------------------------------------- rationale

inline constexpr int kRationaleClasses = 4;

/// Summed 4-way cross-entropy of a linear head over each sentence's value
/// vector. An empty label list marks an unlabelled case: it contributes 0.
template <typename Scalar>
Scalar rationale_loss(const Matrix<Scalar>& values, const std::vector<int>& labels, const Matrix<Scalar>& head_weight,
                      const RowVector<Scalar>& head_bias) {
  if (labels.empty()) {
    ++diagnostics().missing_rationale_labels;
    return Scalar(0);
  }
  if (static_cast<Index>(labels.size()) != values.rows()) throw DimensionError("rationale_loss: one label per sentence");
  Matrix<Scalar> logits = (values * head_weight).rowwise() + head_bias;
  Scalar total = Scalar(0);
  for (Index i = 0; i < logits.rows(); ++i) {
    const int t = labels[static_cast<std::size_t>(i)];
    if (t < 0 || t >= kRationaleClasses) throw ValidationError("rationale label outside {0..3}");
    const Scalar m = logits.row(i).maxCoeff();
    const Scalar lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, t);
  }
  return total;
}

// --------------------------------------------------------------- alignment

/// KL(a' || c') with a' = A / sum(A) and c' = softmax over all cells of C.
/// An all-zero A yields 0.
template <typename Scalar>
Scalar alignment_kl_loss(const Matrix<Scalar>& alignment, const Matrix<Scalar>& legal_correlation) {
  if (alignment.rows() != legal_correlation.rows() || alignment.cols() != legal_correlation.cols()) {
    throw DimensionError("alignment_kl_loss: shapes differ");
  }
  const Scalar mass = alignment.sum();
  if (mass <= Scalar(0)) {
    ++diagnostics().empty_alignment;
    return Scalar(0);
  }
  const Scalar m = legal_correlation.maxCoeff();
  const Scalar log_z = m + std::log((legal_correlation.array() - m).exp().sum());
  Scalar kl = Scalar(0);
  for (Index j = 0; j < alignment.cols(); ++j) {
    for (Index i = 0; i < alignment.rows(); ++i) {
      const Scalar a = alignment(i, j) / mass;
      if (a > Scalar(0)) kl += a * (std::log(a) - (legal_correlation(i, j) - log_z));
    }
  }
  return std::max(kl, Scalar(0));
}

// ------------------------------------------------------------ tape nodes

namespace tape {

template <typename Scalar>
Matrix<Scalar> scalar_matrix(Scalar v) {
  Matrix<Scalar> m(1, 1);
  m(0, 0) = v;
  return m;
}

/// `cosines` is n_L x 1 (raw cosines, the temperature is applied here).
template <typename Scalar>
ad::Var<Scalar> zlpr(const ad::Var<Scalar>& cosines, const std::vector<int>& labels, Scalar tau) {
  Vector<Scalar> scores = cosines.value().col(0);
  Vector<Scalar> grad;
  const Scalar value = zlpr_loss<Scalar>(scores, labels, tau, &grad);
  return ad::make_node<Scalar>(scalar_matrix(value), {cosines}, [grad](ad::Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().col(0) += self.grad(0, 0) * grad;
  });
}

/// `scores` is n x 1.
template <typename Scalar>
ad::Var<Scalar> cosent(const ad::Var<Scalar>& scores, const std::vector<int>& levels, Scalar tau) {
  Vector<Scalar> s = scores.value().col(0);
  Vector<Scalar> grad;
  const Scalar value = cosent_loss<Scalar>(s, levels, tau, &grad);
  return ad::make_node<Scalar>(scalar_matrix(value), {scores}, [grad](ad::Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().col(0) += self.grad(0, 0) * grad;
  });
}

/// `probs` is 1 x |Z|. The clamped region has zero gradient.
template <typename Scalar>
ad::Var<Scalar> cross_entropy(const ad::Var<Scalar>& probs, int gold_class) {
  const Vector<Scalar> p = probs.value().row(0).transpose();
  const Scalar value = ce_loss<Scalar>(p, gold_class);
  return ad::make_node<Scalar>(scalar_matrix(value), {probs}, [gold_class](ad::Node<Scalar>& self) {
    auto& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    const Scalar pg = parent.value(0, gold_class);
    if (pg > Scalar(kProbabilityFloor)) parent.grad_buffer()(0, gold_class) -= self.grad(0, 0) / pg;
  });
}

/// Summed cross-entropy of row-wise logits (n x 4) against per-row classes.
template <typename Scalar>
ad::Var<Scalar> rationale(const ad::Var<Scalar>& logits, const std::vector<int>& labels) {
  if (labels.empty()) {
    ++diagnostics().missing_rationale_labels;
    return ad::constant<Scalar>(scalar_matrix(Scalar(0)));
  }
  if (static_cast<Index>(labels.size()) != logits.rows()) throw DimensionError("rationale: one label per sentence");
  Matrix<Scalar> probs = ad::softmax_rows_value(logits.value());
  Scalar total = Scalar(0);
  for (Index i = 0; i < logits.rows(); ++i) {
    const int t = labels[static_cast<std::size_t>(i)];
    if (t < 0 || t >= kRationaleClasses) throw ValidationError("rationale label outside {0..3}");
    total -= std::log(std::max(probs(i, t), Scalar(kProbabilityFloor)));
  }
  return ad::make_node<Scalar>(scalar_matrix(total), {logits}, [probs, labels](ad::Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix<Scalar> g = probs;
    for (Index i = 0; i < g.rows(); ++i) g(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
    p.grad_buffer() += self.grad(0, 0) * g;
  });
}

template <typename Scalar>
ad::Var<Scalar> alignment_kl(const ad::Var<Scalar>& legal_correlation, const Matrix<Scalar>& alignment) {
  const Scalar value = alignment_kl_loss<Scalar>(alignment, legal_correlation.value());
  const Scalar mass = alignment.sum();
  if (mass <= Scalar(0)) return ad::constant<Scalar>(scalar_matrix(Scalar(0)));
  return ad::make_node<Scalar>(scalar_matrix(value), {legal_correlation}, [alignment, mass](ad::Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const Scalar m = p.value.maxCoeff();
    Matrix<Scalar> soft = (p.value.array() - m).exp().matrix();
    soft /= soft.sum();
    p.grad_buffer() += self.grad(0, 0) * (soft - alignment / mass);
  });
}

}  // namespace tape

}  // namespace lcmlai::losses
