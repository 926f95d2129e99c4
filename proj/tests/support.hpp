#pragma once

// Shared fixtures for the unit, property and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "lcmlai/data.hpp"
#include "lcmlai/model.hpp"
#include "lcmlai/verification/gradcheck.hpp"

namespace lcmlai::testing {

/// splitmix64; independent of the library's Rng so fixtures do not move when
/// the library's sampling changes.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : s_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53;
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  MatrixXd matrix(Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
    MatrixXd m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
    return m;
  }
  std::vector<Index> permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), Index{0});
    for (std::size_t i = p.size(); i > 1; --i) std::swap(p[i - 1], p[next() % i]);
    return p;
  }

 private:
  std::uint64_t s_;
};

inline constexpr int kFixtures = 100;

template <typename M>
M permute_rows(const M& m, const std::vector<Index>& p) {
  M out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(p[static_cast<std::size_t>(i)]);
  return out;
}

inline ModelConfig tiny_config(Variant v = Variant::kFull, std::uint64_t seed = 1) {
  ModelConfig c;
  c.d_b = 8;
  c.d_h = 6;
  c.d_s = 8;
  c.d_l = 6;
  c.variant = v;
  c.seed = seed;
  return c;
}

inline std::vector<std::string> article_names(Index n) {
  std::vector<std::string> ids;
  for (Index k = 0; k < n; ++k) ids.push_back("a" + std::to_string(k));
  return ids;
}

template <typename Scalar>
std::unique_ptr<LcmLaiModel<Scalar>> tiny_model(const ModelConfig& c, Index n_articles = 4, int levels = 3,
                                                std::uint64_t article_seed = 99) {
  Gen g(article_seed);
  return std::make_unique<LcmLaiModel<Scalar>>(c, g.matrix(n_articles, c.d_b), article_names(n_articles), levels);
}

/// Runs the analytic backward pass of `loss` once, then checks every listed
/// parameter against central differences.
inline std::vector<verification::GradCheckReport> check_gradients(const nn::ParameterSet<double>& params,
                                                                   const std::function<ad::Var<double>()>& loss,
                                                                   std::size_t samples = 0) {
  params.zero_grad();
  loss().backward();
  std::vector<verification::CheckedTensor> tensors;
  for (std::size_t i = 0; i < params.size(); ++i) {
    MatrixXd g = params[i].grad();
    if (g.size() == 0) g = MatrixXd::Zero(params[i].rows(), params[i].cols());
    tensors.push_back({params.name(i), &params[i].mutable_value(), g});
  }
  auto value = [&] {
    ad::NoGradGuard guard;
    return loss().item();
  };
  return verification::finite_difference_check(value, tensors, samples);
}

inline std::string failing(const std::vector<verification::GradCheckReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    if (!r.pass) out += r.name + " rel " + std::to_string(r.max_rel_err) + "; ";
  }
  return out;
}

/// Small synthetic corpus for pipeline-level tests.
inline Corpus small_corpus(std::uint64_t seed = 7, int n_pairs = 60, int n_cases = 60) {
  SyntheticOptions o;
  o.seed = seed;
  o.n_cases = n_cases;
  o.n_articles = 4;
  o.n_pairs = n_pairs;
  o.n_queries = 6;
  o.candidates_per_query = 8;
  return make_synthetic_corpus(o);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("lcmlai_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace lcmlai::testing
