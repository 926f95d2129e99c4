#include <doctest.h>

#include "lcmlai/metrics.hpp"
#include "lcmlai/verification/oracles.hpp"
#include "support.hpp"

using namespace lcmlai;
using namespace lcmlai::metrics;

namespace {

/// Every list of length 1..max_len over grades 0..3.
std::vector<std::vector<int>> all_lists(int max_len) {
  std::vector<std::vector<int>> out;
  for (int len = 1; len <= max_len; ++len) {
    std::vector<int> l(static_cast<std::size_t>(len), 0);
    for (;;) {
      out.push_back(l);
      std::size_t i = 0;
      while (i < l.size() && l[i] == 3) l[i++] = 0;
      if (i == l.size()) break;
      ++l[i];
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("binary pattern [1,0,1,0,0]") {
    const std::vector<int> r{1, 0, 1, 0, 0};
    CHECK(*average_precision(r, 1) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(precision_at(r, 5, 1) == doctest::Approx(0.4));
    CHECK(verification::brute_force_map(r, 1) == doctest::Approx(0.8333333333));
  }

  TEST_CASE("perfect ordering has NDCG 1 at every cutoff") {
    const std::vector<int> r{3, 3, 2, 1, 1, 0, 0};
    for (int k : {1, 2, 5, 10, 20, 30}) CHECK(ndcg_at(r, k) == doctest::Approx(1.0));
    CHECK(verification::brute_force_ndcg(r, 5) == doctest::Approx(1.0));
  }

  TEST_CASE("reversing a strictly graded ranking lowers NDCG") {
    std::vector<int> r{3, 2, 1, 0};
    std::vector<int> rev(r.rbegin(), r.rend());
    CHECK(ndcg_at(rev, 4) < ndcg_at(r, 4));
  }

  TEST_CASE("precision divides by k even for short lists") {
    CHECK(precision_at({1, 1}, 5, 1) == doctest::Approx(0.4));
  }

  TEST_CASE("all-zero list scores 0 and is excluded from MAP") {
    diagnostics().reset();
    auto rep = ranking_report({{0, 0, 0}, {1, 0}}, 1);
    CHECK(rep.excluded_from_map == 1);
    CHECK(rep.map == 1.0);
    CHECK(rep.ndcg.at(5) == doctest::Approx(0.5));
    CHECK(diagnostics().queries_without_relevant == 1);
  }

  TEST_CASE("exhaustive sweep against the oracles, lengths up to 6") {
    int mismatches = 0;
    for (const auto& l : all_lists(6)) {
      for (int g = 1; g <= 3; ++g) {
        const auto ap = average_precision(l, g);
        const double oracle = verification::brute_force_map(l, g);
        if (oracle < 0 ? ap.has_value() : (!ap || *ap != oracle)) ++mismatches;
        for (int k : {1, 2, 3, 5, 6, 10}) {
          if (precision_at(l, k, g) != verification::brute_force_precision(l, k, g)) ++mismatches;
        }
      }
      for (int k : {1, 2, 3, 5, 6, 10, 20, 30}) {
        if (std::abs(ndcg_at(l, k) - verification::brute_force_ndcg(l, k)) >= 1e-9) ++mismatches;
        if (std::abs(ndcg_at(l, k, Gain::kLinear) - verification::brute_force_ndcg(l, k, true)) >= 1e-9) ++mismatches;
      }
    }
    CHECK(mismatches == 0);
  }

  TEST_CASE("matching metrics: perfect, constant and a known confusion matrix") {
    std::vector<int> gold{0, 1, 2, 0, 1, 2};
    auto perfect = matching_report(gold, gold, 3);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.macro_f1 == 1.0);
    CHECK(perfect.macro_precision == 1.0);
    CHECK(perfect.macro_recall == 1.0);

    auto constant = matching_report(gold, std::vector<int>(6, 1), 3);
    CHECK(constant.accuracy == doctest::Approx(1.0 / 3.0));

    // gold 0: 3 items -> predicted 0,0,1; gold 1: 2 items -> 1,2; gold 2: 3 items -> 2,2,0.
    std::vector<int> g2{0, 0, 0, 1, 1, 2, 2, 2};
    std::vector<int> p2{0, 0, 1, 1, 2, 2, 2, 0};
    auto rep = matching_report(g2, p2, 3);
    // P = (2/3, 1/2, 2/3); R = (2/3, 1/2, 2/3); F1 equal to P per class.
    CHECK(rep.confusion[2][0] == 1);
    CHECK(rep.macro_precision == doctest::Approx((2.0 / 3 + 0.5 + 2.0 / 3) / 3));
    CHECK(rep.macro_recall == doctest::Approx((2.0 / 3 + 0.5 + 2.0 / 3) / 3));
    CHECK(rep.macro_f1 == doctest::Approx((2.0 / 3 + 0.5 + 2.0 / 3) / 3));
    CHECK(rep.accuracy == doctest::Approx(5.0 / 8));

    // Asymmetric case: gold {0,0,1,1}, predicted {0,1,1,1}.
    auto a = matching_report({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    const double f0 = 2 * 1.0 * 0.5 / 1.5, f1 = 2 * (2.0 / 3) * 1.0 / (2.0 / 3 + 1.0);
    CHECK(a.macro_f1 == doctest::Approx((f0 + f1) / 2));
  }

  TEST_CASE("absent classes get P and R of 0 and are counted") {
    diagnostics().reset();
    auto r = matching_report({0, 0}, {0, 0}, 3);
    CHECK(r.undefined == 4);
    CHECK(r.precision[2] == 0.0);
    CHECK(r.macro_f1 == doctest::Approx(1.0 / 3.0));
  }
}
