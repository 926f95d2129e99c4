#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lcmlai/autodiff.hpp"

namespace lcmlai::nn {

template <typename Scalar>
using Var = ad::Var<Scalar>;

/// Named handles to every trainable leaf of a model, in registration order.
template <typename Scalar>
class ParameterSet {
 public:
  void add(std::string name, Var<Scalar>* param) { entries_.emplace_back(std::move(name), param); }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Var<Scalar>& operator[](std::size_t i) const { return *entries_[i].second; }

  Var<Scalar>* find(const std::string& name) const {
    for (const auto& [n, p] : entries_) {
      if (n == name) return p;
    }
    return nullptr;
  }

  void zero_grad() const {
    for (const auto& e : entries_) e.second->zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.second->value().size());
    return n;
  }

 private:
  std::vector<std::pair<std::string, Var<Scalar>*>> entries_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
Matrix<Scalar> small_uniform(Index rows, Index cols, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  Matrix<Scalar> m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  return m;
}

/// Square orthogonal matrix from the QR factor of a Gaussian draw.
template <typename Scalar>
Matrix<Scalar> orthogonal(Index n, Rng& rng) {
  MatrixXd g(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
  // Sign-fix so the factorisation is unique.
  const MatrixXd r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q.cast<Scalar>();
}

/// y = x W (+ b), x is n x in, W is in x out.
template <typename Scalar>
struct Linear {
  Var<Scalar> weight;
  Var<Scalar> bias;
  bool has_bias = true;

  Linear() = default;
  Linear(Index in, Index out, bool with_bias, Rng& rng)
      : weight(Var<Scalar>::parameter(small_uniform<Scalar>(in, out, in, rng))), has_bias(with_bias) {
    if (has_bias) bias = Var<Scalar>::parameter(small_uniform<Scalar>(1, out, in, rng));
  }

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    Var<Scalar> y = ad::matmul(x, weight);
    return has_bias ? ad::add_row(y, bias) : y;
  }

  void register_parameters(ParameterSet<Scalar>& set, const std::string& prefix) {
    set.add(prefix + ".weight", &weight);
    if (has_bias) set.add(prefix + ".bias", &bias);
  }
};

/// Linear -> tanh -> Linear.
template <typename Scalar>
struct Mlp2 {
  Linear<Scalar> first;
  Linear<Scalar> second;

  Mlp2() = default;
  Mlp2(Index in, Index hidden, Index out, Rng& rng) : first(in, hidden, true, rng), second(hidden, out, true, rng) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return second(ad::tanh(first(x))); }

  void register_parameters(ParameterSet<Scalar>& set, const std::string& prefix) {
    first.register_parameters(set, prefix + ".0");
    second.register_parameters(set, prefix + ".1");
  }
};

/// One direction of a GRU with gate order (reset, update, candidate):
///   r = sigma(x W_ir + b_ir + h W_hr + b_hr)
///   z = sigma(x W_iz + b_iz + h W_hz + b_hz)
///   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
///   h' = (1 - z) * n + z * h
template <typename Scalar>
struct GruCell {
  Var<Scalar> input_weight;   // in x 3h
  Var<Scalar> input_bias;     // 1 x 3h
  Var<Scalar> hidden_weight;  // h x 3h
  Var<Scalar> hidden_bias;    // 1 x 3h

  GruCell() = default;
  GruCell(Index in, Index hidden, Rng& rng) {
    input_weight = Var<Scalar>::parameter(small_uniform<Scalar>(in, 3 * hidden, hidden, rng));
    input_bias = Var<Scalar>::parameter(small_uniform<Scalar>(1, 3 * hidden, hidden, rng));
    Matrix<Scalar> recurrent(hidden, 3 * hidden);
    for (int gate = 0; gate < 3; ++gate) recurrent.middleCols(gate * hidden, hidden) = orthogonal<Scalar>(hidden, rng);
    hidden_weight = Var<Scalar>::parameter(std::move(recurrent));
    hidden_bias = Var<Scalar>::parameter(small_uniform<Scalar>(1, 3 * hidden, hidden, rng));
  }

  Index hidden_size() const { return hidden_weight.rows(); }

  /// Runs over the rows of `sequence`, in reverse when `reverse` is set.
  /// Returned hidden states are aligned with the input rows.
  std::vector<Var<Scalar>> run(const Var<Scalar>& sequence, bool reverse) const {
    const Index n = sequence.rows();
    const Index h = hidden_size();
    Var<Scalar> projected = ad::add_row(ad::matmul(sequence, input_weight), input_bias);
    std::vector<Var<Scalar>> states(static_cast<std::size_t>(n));
    Var<Scalar> state = ad::constant<Scalar>(Matrix<Scalar>::Zero(1, h));
    for (Index step = 0; step < n; ++step) {
      const Index t = reverse ? n - 1 - step : step;
      Var<Scalar> xt = ad::row(projected, t);
      Var<Scalar> ht = ad::add_row(ad::matmul(state, hidden_weight), hidden_bias);
      Var<Scalar> r = ad::sigmoid(ad::add(ad::middle_cols(xt, 0, h), ad::middle_cols(ht, 0, h)));
      Var<Scalar> z = ad::sigmoid(ad::add(ad::middle_cols(xt, h, h), ad::middle_cols(ht, h, h)));
      Var<Scalar> cand =
          ad::tanh(ad::add(ad::middle_cols(xt, 2 * h, h), ad::cwise_mul(r, ad::middle_cols(ht, 2 * h, h))));
      state = ad::add(ad::cwise_mul(ad::one_minus(z), cand), ad::cwise_mul(z, state));
      states[static_cast<std::size_t>(t)] = state;
    }
    return states;
  }

  void register_parameters(ParameterSet<Scalar>& set, const std::string& prefix) {
    set.add(prefix + ".input_weight", &input_weight);
    set.add(prefix + ".input_bias", &input_bias);
    set.add(prefix + ".hidden_weight", &hidden_weight);
    set.add(prefix + ".hidden_bias", &hidden_bias);
  }
};

/// Bidirectional GRU; output row i is [forward_i | backward_i], width 2 * hidden.
template <typename Scalar>
struct BiGru {
  GruCell<Scalar> forward;
  GruCell<Scalar> backward;

  BiGru() = default;
  /// `out` must be even; each direction gets out / 2 units.
  BiGru(Index in, Index out, Rng& rng) : forward(in, out / 2, rng), backward(in, out / 2, rng) {
    if (out % 2 != 0) throw ConfigError("BiGru output width must be even");
  }

  Index in_dim() const { return forward.input_weight.rows(); }
  Index out_dim() const { return 2 * forward.hidden_size(); }

  Var<Scalar> operator()(const Var<Scalar>& sequence) const {
    if (sequence.cols() != in_dim()) throw DimensionError("BiGru: input width differs");
    auto fwd = forward.run(sequence, false);
    auto bwd = backward.run(sequence, true);
    std::vector<Var<Scalar>> rows;
    rows.reserve(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) rows.push_back(ad::hconcat<Scalar>({fwd[i], bwd[i]}));
    return ad::vconcat(rows);
  }

  void register_parameters(ParameterSet<Scalar>& set, const std::string& prefix) {
    forward.register_parameters(set, prefix + ".fwd");
    backward.register_parameters(set, prefix + ".bwd");
  }
};

}  // namespace lcmlai::nn
