#pragma once

// Central-difference gradient checker. Depends on Eigen only, so it can check
// any code that exposes its loss as a function of mutable double tensors.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lcmlai::verification {

inline constexpr double kGradTolerance = 1e-4;

struct GradCheckReport {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
  /// Entries whose perturbed loss was NaN or infinite.
  std::size_t non_finite = 0;
  std::size_t checked = 0;
};

/// One tensor under test: the loss reads *value, and `analytic` holds the
/// gradient the implementation claims for it.
struct CheckedTensor {
  std::string name;
  Eigen::MatrixXd* value = nullptr;
  Eigen::MatrixXd analytic;
};

/// For each tensor compares `analytic` with (L(θ+h) - L(θ-h)) / 2h, h =
/// 1e-5 max(1, |θ|), at up to `samples` entries (all entries when samples is
/// 0 or exceeds the size). Relative error is |a - n| / max(|a|, |n|, 1e-6).
/// Values are restored afterwards.
std::vector<GradCheckReport> finite_difference_check(const std::function<double()>& loss,
                                                     std::vector<CheckedTensor>& tensors, std::size_t samples = 0,
                                                     std::uint64_t seed = 1, double tolerance = kGradTolerance);

bool all_pass(const std::vector<GradCheckReport>& reports);

}  // namespace lcmlai::verification
