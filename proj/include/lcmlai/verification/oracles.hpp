#pragma once

// Deliberately naive reference implementations: plain loops over doubles,
// nothing shared with the library code they are compared against.

#include <vector>

#include <Eigen/Dense>

namespace lcmlai::verification {

struct AttentionReference {
  Eigen::MatrixXd lambda;  ///< n x n_L
  Eigen::MatrixXd gamma;   ///< n x n_L, columns sum to 1
  Eigen::MatrixXd reps;    ///< n_L x d_h
};

/// Article attention over sentence states H (n x d_b) with memories M
/// (n_L x d_b) and bias-free projections W_q, W_k, W_v (d_b x d_h, applied as
/// x W).
AttentionReference brute_force_attention(const Eigen::MatrixXd& states, const Eigen::MatrixXd& memories,
                                         const Eigen::MatrixXd& w_query, const Eigen::MatrixXd& w_key,
                                         const Eigen::MatrixXd& w_value);

/// Average precision of a graded ranking with grades >= min_grade relevant.
/// Returns -1 when nothing is relevant.
double brute_force_map(const std::vector<int>& ranked, int min_grade);

double brute_force_precision(const std::vector<int>& ranked, int k, int min_grade);

/// NDCG@k with gain 2^g - 1 (or g when `linear`), the ideal found by trying
/// every ordering. Intended for lists of at most 8 entries.
double brute_force_ndcg(const std::vector<int>& ranked, int k, bool linear = false);

}  // namespace lcmlai::verification
