#include <doctest.h>

#include "lcmlai/lim.hpp"
#include "lcmlai/verification/oracles.hpp"
#include "support.hpp"

using namespace lcmlai;
using lcmlai::testing::Gen;
using lcmlai::testing::kFixtures;

namespace {

ad::Var<double> c(const MatrixXd& m) { return ad::constant(m); }

lim::LimParams<double> params(const MatrixXd& articles, Index d_h, Index d_l, std::uint64_t seed) {
  Rng rng(seed);
  return lim::LimParams<double>(articles, d_h, d_l, rng);
}

}  // namespace

TEST_SUITE("lim") {
  TEST_CASE("one sentence: gamma is all ones and every rep is v_1") {
    Gen g(1);
    auto p = params(g.matrix(3, 4), 5, 6, 2);
    MatrixXd h = g.matrix(1, 4);
    ad::NoGradGuard guard;
    auto d = lim::article_attention(c(h), p.attention);
    CHECK(d.gamma.value().isOnes(1e-15));
    for (Index k = 0; k < 3; ++k) CHECK((d.reps.value().row(k) - d.values.value().row(0)).norm() < 1e-12);
  }

  TEST_CASE("a constant lambda column averages the values") {
    Gen g(2);
    MatrixXd lambda = MatrixXd::Constant(4, 2, 0.3);
    MatrixXd v = g.matrix(4, 3);
    ad::NoGradGuard guard;
    auto d = lim::distribution_from_scores(c(lambda), c(v));
    CHECK((d.reps.value().row(0) - v.colwise().mean()).norm() < 1e-12);
  }

  TEST_CASE("no sentences is an error") {
    Gen g(3);
    auto p = params(g.matrix(3, 4), 5, 6, 2);
    CHECK_THROWS_AS(lim::article_attention(c(MatrixXd(0, 4)), p.attention), DimensionError);
  }

  TEST_CASE("attention equals the brute-force oracle up to n=8, n_L=6") {
    Gen g(77);
    for (int f = 0; f < kFixtures; ++f) {
      const Index n = g.integer(1, 8), n_l = g.integer(1, 6), d_b = 2 * g.integer(1, 3), d_h = g.integer(1, 5);
      auto p = params(g.matrix(n_l, d_b), d_h, 4, g.next());
      MatrixXd h = g.matrix(n, d_b, -2, 2);
      ad::NoGradGuard guard;
      auto d = lim::article_attention(c(h), p.attention);
      auto ref = verification::brute_force_attention(h, p.attention.memories.value(), p.attention.query.weight.value(),
                                                     p.attention.key.weight.value(), p.attention.value.weight.value());
      CHECK((d.lambda.value() - ref.lambda).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((d.gamma.value() - ref.gamma).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((d.reps.value() - ref.reps).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((d.gamma.value().colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
      // Permutation equivariance of lambda.
      auto perm = g.permutation(n);
      auto dp = lim::article_attention(c(lcmlai::testing::permute_rows(h, perm)), p.attention);
      CHECK((dp.lambda.value() - lcmlai::testing::permute_rows(d.lambda.value(), perm)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((dp.reps.value() - d.reps.value()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("article probability examples") {
    MatrixXd proto(3, 2), reps(3, 2);
    proto << 1, 0, 0.5, 2, 1, 1;
    reps << 0, 3, 0.5, 2, -1, -1;
    auto p = lim::article_probabilities<double>(reps, proto);
    CHECK(p(0) == doctest::Approx(0.5));
    CHECK(p(1) == doctest::Approx(0.7310585786));
    CHECK(p(2) == doctest::Approx(0.2689414214));
  }

  TEST_CASE("zero-norm rows give probability 0.5 and are counted") {
    diagnostics().reset();
    MatrixXd proto = MatrixXd::Ones(2, 3), reps = MatrixXd::Zero(2, 3);
    reps(1, 0) = 1;
    auto p = lim::article_probabilities<double>(reps, proto);
    CHECK(p(0) == 0.5);
    CHECK(std::isfinite(p(1)));
    CHECK(diagnostics().zero_norm_cosine == 1);
  }

  TEST_CASE("predicted set uses a strict threshold") {
    Vector<double> p(2);
    p << 0.6, 0.4;
    CHECK(lim::predict_article_set(p) == std::vector<Index>{0});
    p << 0.5, 0.5;
    CHECK(lim::predict_article_set(p).empty());
    p << 0.1, 0.2;
    CHECK(lim::predict_article_set(p).empty());
    CHECK(lim::predict_article_ids(Vector<double>::Constant(2, 0.9), {"x", "y"}) == std::vector<std::string>{"x", "y"});
  }

  TEST_CASE("predicted set is monotone in the probabilities") {
    Gen g(8);
    for (int f = 0; f < kFixtures; ++f) {
      Vector<double> p(6);
      for (Index k = 0; k < 6; ++k) p(k) = g.uniform(0.01, 0.99);
      auto before = lim::predict_article_set(p);
      p(g.integer(0, 5)) += g.uniform(0, 0.5);
      auto after = lim::predict_article_set(p);
      for (Index k : before) CHECK(std::find(after.begin(), after.end(), k) != after.end());
    }
  }

  TEST_CASE("legal correlation examples") {
    MatrixXd lx(3, 2), ly(2, 2);
    lx << 1, 2, 0, 1, 0, 0;
    ly << 2, 4, 1, 0;
    MatrixXd corr = lim::legal_correlation<double>(lx, ly);
    CHECK(corr(0, 0) == doctest::Approx(1.0));  // positive multiple
    CHECK(corr(1, 1) == doctest::Approx(0.0));  // orthogonal
    CHECK(corr(2, 0) == 0.0);                   // zero row
    CHECK_THROWS_AS(lim::legal_correlation<double>(lx, MatrixXd::Ones(2, 3)), DimensionError);
  }

  TEST_CASE("legal correlation properties") {
    Gen g(21);
    for (int f = 0; f < kFixtures; ++f) {
      const Index nx = g.integer(1, 6), ny = g.integer(1, 6), n_l = g.integer(1, 6);
      MatrixXd lx = g.matrix(nx, n_l, -3, 3), ly = g.matrix(ny, n_l, -3, 3);
      MatrixXd corr = lim::legal_correlation<double>(lx, ly);
      CHECK(corr.maxCoeff() <= 1.0 + 1e-12);
      CHECK(corr.minCoeff() >= -1.0 - 1e-12);
      const double a = g.uniform(0.1, 10);
      CHECK(lim::legal_correlation<double>(lx.topRows(1), a * lx.topRows(1))(0, 0) == doctest::Approx(1.0));
      CHECK((lim::legal_correlation<double>(a * lx, ly) - corr).cwiseAbs().maxCoeff() < 1e-9);
      auto px = g.permutation(nx);
      auto py = g.permutation(ny);
      MatrixXd permuted = lim::legal_correlation<double>(lcmlai::testing::permute_rows(lx, px),
                                                         lcmlai::testing::permute_rows(ly, py));
      for (Index i = 0; i < nx; ++i) {
        for (Index j = 0; j < ny; ++j) {
          CHECK(permuted(i, j) == doctest::Approx(corr(px[static_cast<std::size_t>(i)], py[static_cast<std::size_t>(j)])));
        }
      }
    }
  }

  TEST_CASE("legal interaction with one candidate sentence copies its value") {
    Gen g(4);
    auto p = params(g.matrix(3, 4), 3, 4, 9);
    MatrixXd vx = g.matrix(5, 3), vy = g.matrix(1, 3);
    ad::NoGradGuard guard;
    auto corr = lim::legal_correlation(c(vx), c(vy));
    auto r = lim::legal_interaction_encode(c(vx), c(vy), corr, p);
    for (Index i = 0; i < 5; ++i) CHECK((r.x_inputs.value().row(i).tail(3) - vy.row(0)).norm() < 1e-12);
    CHECK(r.x_rep.cols() == 4);
  }

  TEST_CASE("legal interaction inputs equal a loop oracle") {
    Gen g(5);
    auto p = params(g.matrix(3, 4), 3, 4, 9);
    MatrixXd vx = g.matrix(4, 3), vy = g.matrix(3, 3), corr = g.matrix(4, 3);
    ad::NoGradGuard guard;
    auto r = lim::legal_interaction_encode(c(vx), c(vy), c(corr), p);
    for (Index i = 0; i < 4; ++i) {
      double z = 0;
      for (Index j = 0; j < 3; ++j) z += std::exp(corr(i, j));
      for (Index d = 0; d < 3; ++d) {
        double s = 0;
        for (Index j = 0; j < 3; ++j) s += std::exp(corr(i, j)) / z * vy(j, d);
        CHECK(r.x_inputs.value()(i, 3 + d) == doctest::Approx(s).epsilon(1e-12));
        CHECK(r.x_inputs.value()(i, d) == vx(i, d));
      }
    }
  }

  TEST_CASE("AIA context and fallback") {
    Gen g(6);
    MatrixXd arts = g.matrix(4, 6);
    CHECK(lim::aia_context<double>({2}, arts) == arts.row(2));
    diagnostics().reset();
    CHECK((lim::aia_context<double>({}, arts) - arts.colwise().mean()).norm() < 1e-15);
    CHECK(diagnostics().empty_article_prediction == 1);

    auto p = params(arts, 3, 4, 10);
    MatrixXd hidden = g.matrix(3, 4);
    ad::NoGradGuard guard;
    auto fallback = lim::article_intervened_attention(c(hidden), std::vector<Index>{}, arts, p);
    auto all = lim::article_intervened_attention(c(hidden), std::vector<Index>{0, 1, 2, 3}, arts, p);
    CHECK(fallback.rep.value().allFinite());
    CHECK((fallback.rep.value() - all.rep.value()).norm() < 1e-12);
    CHECK(fallback.psi.value().sum() == doctest::Approx(1.0));
  }

  TEST_CASE("equal AIA logits average the hidden states") {
    Gen g(7);
    MatrixXd arts = g.matrix(2, 4);
    auto p = params(arts, 3, 4, 11);
    MatrixXd hidden = g.matrix(1, 4).replicate(3, 1);  // identical rows -> identical logits
    hidden.col(0) << 1, 2, 3;
    p.w_h.weight.mutable_value().row(0).setZero();  // column 0 no longer affects the logits
    ad::NoGradGuard guard;
    auto r = lim::article_intervened_attention(c(hidden), std::vector<Index>{1}, arts, p);
    CHECK((r.psi.value().array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
    CHECK((r.rep.value() - hidden.colwise().mean()).norm() < 1e-12);
  }

  TEST_CASE("psi sums to one on random fixtures") {
    Gen g(31);
    for (int f = 0; f < kFixtures; ++f) {
      const Index n_l = g.integer(1, 5), n = g.integer(1, 7);
      MatrixXd arts = g.matrix(n_l, 4);
      auto p = params(arts, 3, 4, g.next());
      std::vector<Index> predicted;
      for (Index k = 0; k < n_l; ++k) {
        if (g.integer(0, 1)) predicted.push_back(k);
      }
      ad::NoGradGuard guard;
      auto r = lim::article_intervened_attention(c(g.matrix(n, 4)), predicted, arts, p);
      CHECK(std::abs(r.psi.value().sum() - 1.0) < 1e-6);
    }
  }
}
