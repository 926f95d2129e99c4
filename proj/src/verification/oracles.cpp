#include "lcmlai/verification/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace lcmlai::verification {

namespace {

double project(const Eigen::MatrixXd& x, int row, const Eigen::MatrixXd& w, int col) {
  double s = 0.0;
  for (int j = 0; j < x.cols(); ++j) s += x(row, j) * w(j, col);
  return s;
}

}  // namespace

AttentionReference brute_force_attention(const Eigen::MatrixXd& states, const Eigen::MatrixXd& memories,
                                         const Eigen::MatrixXd& w_query, const Eigen::MatrixXd& w_key,
                                         const Eigen::MatrixXd& w_value) {
  const int n = static_cast<int>(states.rows());
  const int n_l = static_cast<int>(memories.rows());
  const int d_h = static_cast<int>(w_query.cols());
  AttentionReference out;
  out.lambda.resize(n, n_l);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n_l; ++k) {
      double dot = 0.0;
      for (int h = 0; h < d_h; ++h) dot += project(memories, k, w_query, h) * project(states, i, w_key, h);
      out.lambda(i, k) = dot;
    }
  }
  out.gamma.resize(n, n_l);
  for (int k = 0; k < n_l; ++k) {
    double top = out.lambda(0, k);
    for (int i = 1; i < n; ++i) top = std::max(top, out.lambda(i, k));
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(out.lambda(i, k) - top);
    for (int i = 0; i < n; ++i) out.gamma(i, k) = std::exp(out.lambda(i, k) - top) / z;
  }
  out.reps = Eigen::MatrixXd::Zero(n_l, d_h);
  for (int k = 0; k < n_l; ++k) {
    for (int h = 0; h < d_h; ++h) {
      for (int i = 0; i < n; ++i) out.reps(k, h) += out.gamma(i, k) * project(states, i, w_value, h);
    }
  }
  return out;
}

double brute_force_map(const std::vector<int>& ranked, int min_grade) {
  int relevant = 0;
  for (int g : ranked) relevant += g >= min_grade ? 1 : 0;
  if (relevant == 0) return -1.0;
  double sum = 0.0;
  for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
    if (ranked[pos] < min_grade) continue;
    int hits = 0;
    for (std::size_t j = 0; j <= pos; ++j) hits += ranked[j] >= min_grade ? 1 : 0;
    sum += static_cast<double>(hits) / static_cast<double>(pos + 1);
  }
  return sum / relevant;
}

double brute_force_precision(const std::vector<int>& ranked, int k, int min_grade) {
  int hits = 0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) hits += ranked[static_cast<std::size_t>(i)] >= min_grade ? 1 : 0;
  return static_cast<double>(hits) / k;
}

namespace {

double dcg(const std::vector<int>& ranked, int k, bool linear) {
  double s = 0.0;
  for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
    const int g = ranked[static_cast<std::size_t>(i)];
    const double gain = linear ? g : std::pow(2.0, g) - 1.0;
    s += gain / (std::log(i + 2.0) / std::log(2.0));
  }
  return s;
}

}  // namespace

double brute_force_ndcg(const std::vector<int>& ranked, int k, bool linear) {
  std::vector<int> perm = ranked;
  std::sort(perm.begin(), perm.end());
  double best = 0.0;
  do {
    best = std::max(best, dcg(perm, k, linear));
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (best == 0.0) return 0.0;
  return dcg(ranked, k, linear) / best;
}

}  // namespace lcmlai::verification
