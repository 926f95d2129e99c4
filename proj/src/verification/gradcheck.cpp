#include "lcmlai/verification/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lcmlai::verification {

std::vector<GradCheckReport> finite_difference_check(const std::function<double()>& loss,
                                                     std::vector<CheckedTensor>& tensors, std::size_t samples,
                                                     std::uint64_t seed, double tolerance) {
  std::vector<GradCheckReport> reports;
  std::uint64_t state = seed * 0x9E3779B97F4A7C15ULL + 1;
  auto draw = [&state](std::size_t bound) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<std::size_t>((state >> 33) % bound);
  };
  for (auto& t : tensors) {
    GradCheckReport r;
    r.name = t.name;
    Eigen::MatrixXd& theta = *t.value;
    const auto size = static_cast<std::size_t>(theta.size());
    if (t.analytic.rows() != theta.rows() || t.analytic.cols() != theta.cols()) {
      r.max_rel_err = INFINITY;
      reports.push_back(r);
      continue;
    }
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (samples > 0 && samples < size) {
      for (std::size_t i = 0; i < samples; ++i) std::swap(idx[i], idx[i + draw(size - i)]);
      idx.resize(samples);
    }
    for (std::size_t flat : idx) {
      double& x = theta.data()[flat];
      const double saved = x;
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      x = saved + h;
      const double up = loss();
      x = saved - h;
      const double down = loss();
      x = saved;
      ++r.checked;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        ++r.non_finite;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = t.analytic.data()[flat];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      r.max_rel_err = std::isnan(rel) ? INFINITY : std::max(r.max_rel_err, rel);
    }
    r.pass = r.non_finite == 0 && r.max_rel_err < tolerance;
    reports.push_back(r);
  }
  return reports;
}

bool all_pass(const std::vector<GradCheckReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const GradCheckReport& r) { return r.pass; });
}

}  // namespace lcmlai::verification
