#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Var is a handle to a node holding a value and, when any input requires a
// gradient, the closure that pushes its gradient into its parents. Graphs are
// built implicitly by calling the free functions below and released when the
// last handle goes out of scope. Parameters are long-lived leaves whose
// gradients accumulate across backward() calls until zero_grad().
//
// Row-vector convention: a sequence of n items of width d is an n x d matrix,
// a single representation is 1 x d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lcmlai/types.hpp"

namespace lcmlai::ad {

namespace detail {
inline thread_local bool grad_mode = true;
inline thread_local std::uint64_t matmul_flops = 0;
}  // namespace detail

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode; }

/// Multiply-add count of every matmul evaluated on this thread.
inline std::uint64_t matmul_flops() { return detail::matmul_flops; }
inline void reset_matmul_flops() { detail::matmul_flops = 0; }

template <typename Scalar>
struct Node {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix<Scalar>& grad_buffer() {
    if (grad.size() == 0) grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
    return grad;
  }
};

template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() : node_(std::make_shared<Node<Scalar>>()) {}
  explicit Var(Matrix<Scalar> value) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  /// A leaf whose gradient is tracked regardless of grad mode.
  static Var parameter(Matrix<Scalar> value) {
    Var v(std::move(value));
    v.node_->requires_grad = true;
    return v;
  }

  const Matrix<Scalar>& value() const { return node_->value; }
  Matrix<Scalar>& mutable_value() { return node_->value; }
  const Matrix<Scalar>& grad() const { return node_->grad_buffer(); }
  Matrix<Scalar>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  Scalar item() const { return node_->value(0, 0); }
  const NodePtr& node() const { return node_; }

  /// Accumulates d(this)/d(leaf) into every reachable leaf. `this` must be 1x1.
  void backward() const;

 private:
  NodePtr node_;
};

template <typename Scalar>
Var<Scalar> constant(Matrix<Scalar> value) {
  return Var<Scalar>(std::move(value));
}

/// Records `value` as the output of an op over `parents`. `fn` is only kept
/// when recording is on and some parent needs a gradient.
template <typename Scalar, typename Fn>
Var<Scalar> make_node(Matrix<Scalar> value, std::initializer_list<Var<Scalar>> parents, Fn&& fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::forward<Fn>(fn);
    }
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar, typename Fn>
Var<Scalar> make_node(Matrix<Scalar> value, const std::vector<Var<Scalar>>& parents, Fn&& fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::forward<Fn>(fn);
    }
  }
  return Var<Scalar>(std::move(node));
}

template <typename Scalar>
void Var<Scalar>::backward() const {
  if (rows() != 1 || cols() != 1) throw DimensionError("backward() needs a 1x1 output");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node<Scalar>*> order;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
  std::unordered_set<Node<Scalar>*> marked;
  auto mark = [&marked](Node<Scalar>* n) { return marked.insert(n).second; };

  mark(node_.get());
  stack.emplace_back(node_.get(), 0);
  while (!stack.empty()) {
    auto& [n, next_child] = stack.back();
    if (next_child < n->parents.size()) {
      Node<Scalar>* child = n->parents[next_child++].get();
      if (child->requires_grad && child->backward && mark(child)) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer().array() += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>& n = **it;
    if (n.grad.size() == 0) continue;
    n.backward(n);
    // Interior gradients are not needed after propagation.
    if (&n != node_.get()) n.grad.resize(0, 0);
  }
}

namespace detail {
template <typename Scalar, typename Expr>
void accumulate(Node<Scalar>& parent, const Expr& g) {
  if (parent.requires_grad) parent.grad_buffer() += g;
}

inline void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}
}  // namespace detail

// ---------------------------------------------------------------- arithmetic

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  detail::matmul_flops += static_cast<std::uint64_t>(a.rows() * a.cols() * b.cols());
  return make_node<Scalar>(a.value() * b.value(), {a, b}, [](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.grad_buffer().noalias() += self.grad * pb.value.transpose();
    if (pb.requires_grad) pb.grad_buffer().noalias() += pa.value.transpose() * self.grad;
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  return make_node<Scalar>(a.value() + b.value(), {a, b}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad);
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shapes differ");
  return make_node<Scalar>(a.value() - b.value(), {a, b}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], -self.grad);
  });
}

/// a (n x c) plus the 1 x c row b broadcast over rows.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(b.rows() == 1 && b.cols() == a.cols(), "add_row: bias width differs");
  Matrix<Scalar> out = a.value().rowwise() + b.value().row(0);
  return make_node<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
    detail::accumulate(*self.parents[1], self.grad.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> cwise_mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "cwise_mul: shapes differ");
  return make_node<Scalar>(a.value().cwiseProduct(b.value()), {a, b}, [](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    detail::accumulate(pa, self.grad.cwiseProduct(pb.value));
    detail::accumulate(pb, self.grad.cwiseProduct(pa.value));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  return make_node<Scalar>(a.value() * s, {a}, [s](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad * s);
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  Matrix<Scalar> out = a.value().array() + s;
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad);
  });
}

/// 1 - a, elementwise.
template <typename Scalar>
Var<Scalar> one_minus(const Var<Scalar>& a) {
  Matrix<Scalar> out = (Scalar(1) - a.value().array()).matrix();
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], -self.grad);
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0],
                       (self.grad.array() * (Scalar(1) - self.value.array().square())).matrix());
  });
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().unaryExpr([](Scalar x) { return sigmoid(x); });
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0],
                       (self.grad.array() * self.value.array() * (Scalar(1) - self.value.array())).matrix());
  });
}

/// Elementwise |a|; subgradient 0 at 0.
template <typename Scalar>
Var<Scalar> abs(const Var<Scalar>& a) {
  return make_node<Scalar>(a.value().cwiseAbs(), {a}, [](Node<Scalar>& self) {
    const auto& x = self.parents[0]->value;
    Matrix<Scalar> sign = x.unaryExpr([](Scalar v) {
      return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
    });
    detail::accumulate(*self.parents[0], self.grad.cwiseProduct(sign));
  });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().transpose();
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    detail::accumulate(*self.parents[0], self.grad.transpose());
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().array() += self.grad(0, 0);
  });
}

/// Sum of 1x1 terms, optionally scaled (e.g. 1/n for a mean).
template <typename Scalar>
Var<Scalar> sum_scalars(const std::vector<Var<Scalar>>& terms, Scalar factor = Scalar(1)) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(1, 1);
  for (const auto& t : terms) {
    detail::require(t.rows() == 1 && t.cols() == 1, "sum_scalars: term is not 1x1");
    out(0, 0) += t.item();
  }
  out(0, 0) *= factor;
  return make_node<Scalar>(std::move(out), terms, [factor](Node<Scalar>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad_buffer()(0, 0) += self.grad(0, 0) * factor;
    }
  });
}

// ------------------------------------------------------------ shape movement

/// Column-wise concatenation [a_1 | a_2 | ...]; all parts share a row count.
template <typename Scalar>
Var<Scalar> hconcat(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "hconcat: no parts");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == rows, "hconcat: row counts differ");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_node<Scalar>(std::move(out), parts, [](Node<Scalar>& self) {
    Index offset = 0;
    for (auto& p : self.parents) {
      const Index c = p->value.cols();
      if (p->requires_grad) p->grad_buffer() += self.grad.middleCols(offset, c);
      offset += c;
    }
  });
}

/// Row-wise stacking; all parts share a column count.
template <typename Scalar>
Var<Scalar> vconcat(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "vconcat: no parts");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == cols, "vconcat: column counts differ");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_node<Scalar>(std::move(out), parts, [](Node<Scalar>& self) {
    Index offset = 0;
    for (auto& p : self.parents) {
      const Index r = p->value.rows();
      if (p->requires_grad) p->grad_buffer() += self.grad.middleRows(offset, r);
      offset += r;
    }
  });
}

template <typename Scalar>
Var<Scalar> row(const Var<Scalar>& a, Index i) {
  detail::require(i >= 0 && i < a.rows(), "row: index out of range");
  Matrix<Scalar> out = a.value().row(i);
  return make_node<Scalar>(std::move(out), {a}, [i](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().row(i) += self.grad.row(0);
  });
}

template <typename Scalar>
Var<Scalar> middle_cols(const Var<Scalar>& a, Index start, Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(), "middle_cols: out of range");
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return make_node<Scalar>(std::move(out), {a}, [start, count](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (p.requires_grad) p.grad_buffer().middleCols(start, count) += self.grad;
  });
}

// ---------------------------------------------------------------- reductions

/// Column-wise maximum over rows: 1 x c. Ties resolve to the first row.
template <typename Scalar>
Var<Scalar> max_rows(const Var<Scalar>& a) {
  detail::require(a.rows() > 0, "max_rows: empty input");
  const Index c = a.cols();
  Matrix<Scalar> out(1, c);
  std::vector<Index> arg(static_cast<std::size_t>(c));
  for (Index j = 0; j < c; ++j) {
    Index best = 0;
    for (Index i = 1; i < a.rows(); ++i) {
      if (a.value()(i, j) > a.value()(best, j)) best = i;
    }
    arg[static_cast<std::size_t>(j)] = best;
    out(0, j) = a.value()(best, j);
  }
  return make_node<Scalar>(std::move(out), {a}, [arg = std::move(arg)](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (Index j = 0; j < static_cast<Index>(arg.size()); ++j) g(arg[static_cast<std::size_t>(j)], j) += self.grad(0, j);
  });
}

template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& a) {
  detail::require(a.rows() > 0, "mean_rows: empty input");
  Matrix<Scalar> out = a.value().colwise().mean();
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const Scalar inv = Scalar(1) / static_cast<Scalar>(p.value.rows());
    p.grad_buffer().rowwise() += self.grad.row(0) * inv;
  });
}

// ------------------------------------------------------------------ softmax

/// Numerically stable softmax of each row (in place on a copy).
template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& x) {
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  detail::require(a.cols() > 0, "softmax_rows: no columns");
  return make_node<Scalar>(softmax_rows_value(a.value()), {a}, [](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const auto& y = self.value;
    Vector<Scalar> dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> g = y.cwiseProduct(self.grad.colwise() - dot);
    p.grad_buffer() += g;
  });
}

/// Softmax down each column.
template <typename Scalar>
Var<Scalar> softmax_cols(const Var<Scalar>& a) {
  detail::require(a.rows() > 0, "softmax_cols: no rows");
  Matrix<Scalar> out = softmax_rows_value<Scalar>(a.value().transpose()).transpose();
  return make_node<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    const auto& y = self.value;
    RowVector<Scalar> dot = self.grad.cwiseProduct(y).colwise().sum();
    Matrix<Scalar> g = y.cwiseProduct(self.grad.rowwise() - dot);
    p.grad_buffer() += g;
  });
}

// ------------------------------------------------------- pairwise geometry

/// out(i, j) = -||a_i - b_j||_2. The subgradient at zero distance is 0.
template <typename Scalar>
Var<Scalar> neg_pairwise_distance(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.cols() == b.cols(), "neg_pairwise_distance: widths differ");
  const Index n = a.rows();
  const Index m = b.rows();
  Matrix<Scalar> out(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) out(i, j) = -(a.value().row(i) - b.value().row(j)).norm();
  }
  return make_node<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const Index n = pa.value.rows();
    const Index m = pb.value.rows();
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < m; ++j) {
        const Scalar d = -self.value(i, j);
        if (d <= Scalar(0)) continue;
        const Scalar g = self.grad(i, j);
        if (g == Scalar(0)) continue;
        RowVector<Scalar> dir = (pa.value.row(i) - pb.value.row(j)) / d;
        if (pa.requires_grad) pa.grad_buffer().row(i) -= g * dir;
        if (pb.requires_grad) pb.grad_buffer().row(j) += g * dir;
      }
    }
  });
}

/// out(i, j) = cos(a_i, b_j); rows with zero norm give 0 with zero gradient.
template <typename Scalar>
Var<Scalar> pairwise_cosine(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.cols() == b.cols(), "pairwise_cosine: widths differ");
  Vector<Scalar> na = a.value().rowwise().norm();
  Vector<Scalar> nb = b.value().rowwise().norm();
  Matrix<Scalar> dots = a.value() * b.value().transpose();
  Matrix<Scalar> out(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.rows(); ++j) {
      const Scalar denom = na(i) * nb(j);
      out(i, j) = denom > Scalar(0) ? dots(i, j) / denom : Scalar(0);
    }
  }
  return make_node<Scalar>(std::move(out), {a, b}, [na, nb](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (Index i = 0; i < pa.value.rows(); ++i) {
      for (Index j = 0; j < pb.value.rows(); ++j) {
        const Scalar denom = na(i) * nb(j);
        if (denom <= Scalar(0)) continue;
        const Scalar g = self.grad(i, j);
        if (g == Scalar(0)) continue;
        const Scalar c = self.value(i, j);
        if (pa.requires_grad) {
          pa.grad_buffer().row(i) +=
              g * (pb.value.row(j) / denom - c * pa.value.row(i) / (na(i) * na(i)));
        }
        if (pb.requires_grad) {
          pb.grad_buffer().row(j) +=
              g * (pa.value.row(i) / denom - c * pb.value.row(j) / (nb(j) * nb(j)));
        }
      }
    }
  });
}

/// out(k) = cos(a_k, b_k) as an n x 1 column; zero-norm rows give 0.
template <typename Scalar>
Var<Scalar> rowwise_cosine(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "rowwise_cosine: shapes differ");
  Vector<Scalar> na = a.value().rowwise().norm();
  Vector<Scalar> nb = b.value().rowwise().norm();
  Matrix<Scalar> out(a.rows(), 1);
  for (Index k = 0; k < a.rows(); ++k) {
    const Scalar denom = na(k) * nb(k);
    out(k, 0) = denom > Scalar(0) ? a.value().row(k).dot(b.value().row(k)) / denom : Scalar(0);
  }
  return make_node<Scalar>(std::move(out), {a, b}, [na, nb](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (Index k = 0; k < pa.value.rows(); ++k) {
      const Scalar denom = na(k) * nb(k);
      if (denom <= Scalar(0)) continue;
      const Scalar g = self.grad(k, 0);
      const Scalar c = self.value(k, 0);
      if (pa.requires_grad) {
        pa.grad_buffer().row(k) += g * (pb.value.row(k) / denom - c * pa.value.row(k) / (na(k) * na(k)));
      }
      if (pb.requires_grad) {
        pb.grad_buffer().row(k) += g * (pa.value.row(k) / denom - c * pb.value.row(k) / (nb(k) * nb(k)));
      }
    }
  });
}

}  // namespace lcmlai::ad
