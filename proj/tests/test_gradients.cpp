#include <doctest.h>

#include "lcmlai/losses.hpp"
#include "lcmlai/verification/gradcheck.hpp"
#include "support.hpp"

using namespace lcmlai;
using lcmlai::testing::check_gradients;
using lcmlai::testing::failing;
using lcmlai::testing::Gen;
using verification::all_pass;

namespace {

/// Gradient check of a tape loss over one free input tensor.
std::vector<verification::GradCheckReport> check_input(const MatrixXd& start,
                                                       const std::function<ad::Var<double>(const ad::Var<double>&)>& f) {
  ad::Var<double> x = ad::Var<double>::parameter(start);
  nn::ParameterSet<double> set;
  set.add("input", &x);
  return check_gradients(set, [&] { return f(x); });
}

}  // namespace

TEST_SUITE("gradients") {
  TEST_CASE("checker is exact on a quadratic") {
    MatrixXd theta(2, 2);
    theta << 0.5, -1.5, 2.0, 3.0;
    auto loss = [&] { return 0.5 * theta.squaredNorm() + 3.0 * theta(0, 1); };
    std::vector<verification::CheckedTensor> t{{"theta", &theta, theta}};
    t[0].analytic(0, 1) += 3.0;
    auto r = verification::finite_difference_check(loss, t);
    CHECK(r[0].max_rel_err < 1e-8);
    CHECK(r[0].pass);
  }

  TEST_CASE("checker reports a wrong gradient and a non-finite loss") {
    MatrixXd theta = MatrixXd::Ones(1, 1);
    std::vector<verification::CheckedTensor> t{{"theta", &theta, MatrixXd::Constant(1, 1, 5.0)}};
    auto r = verification::finite_difference_check([&] { return theta(0, 0) * theta(0, 0); }, t);
    CHECK_FALSE(r[0].pass);
    auto nan = verification::finite_difference_check([&] { return std::log(theta(0, 0) - 1.0); }, t);
    CHECK(nan[0].non_finite == 1);
    CHECK_FALSE(nan[0].pass);
  }

  TEST_CASE("zlpr on a random 6-article fixture") {
    Gen g(1);
    auto r = check_input(g.matrix(6, 1, -0.9, 0.9), [](const ad::Var<double>& s) {
      return losses::tape::zlpr(s, {1, 0, 0, 1, 0, 1}, 10.0);
    });
    CHECK_MESSAGE(all_pass(r), failing(r));
  }

  TEST_CASE("cosent on 5 scored pairs with 3 levels") {
    Gen g(2);
    auto r = check_input(g.matrix(5, 1, -0.9, 0.9), [](const ad::Var<double>& s) {
      return losses::tape::cosent(s, {0, 2, 1, 1, 0}, 20.0);
    });
    CHECK_MESSAGE(all_pass(r), failing(r));
  }

  TEST_CASE("cross-entropy through a softmax") {
    Gen g(3);
    auto r = check_input(g.matrix(1, 3), [](const ad::Var<double>& logits) {
      return losses::tape::cross_entropy(ad::softmax_rows(logits), 2);
    });
    CHECK_MESSAGE(all_pass(r), failing(r));
  }

  TEST_CASE("rationale and alignment") {
    Gen g(4);
    auto r1 = check_input(g.matrix(3, 4), [](const ad::Var<double>& logits) {
      return losses::tape::rationale(logits, {0, 3, 1});
    });
    CHECK_MESSAGE(all_pass(r1), failing(r1));
    MatrixXd align(2, 3);
    align << 1, 0, 0, 0, 1, 1;
    auto r2 = check_input(g.matrix(2, 3), [&](const ad::Var<double>& c) { return losses::tape::alignment_kl(c, align); });
    CHECK_MESSAGE(all_pass(r2), failing(r2));
  }

  TEST_CASE("primitive ops used by the model") {
    Gen g(5);
    MatrixXd b = g.matrix(4, 3);
    auto r = check_input(g.matrix(3, 3), [&](const ad::Var<double>& a) {
      auto cb = ad::constant(b);
      auto parts = ad::hconcat<double>({ad::neg_pairwise_distance(a, cb), ad::pairwise_cosine(a, cb)});
      auto rows = ad::softmax_rows(parts);
      auto cols = ad::softmax_cols(ad::tanh(parts));
      auto mix = ad::add(ad::cwise_mul(rows, cols), ad::sigmoid(parts));
      auto pooled = ad::add(ad::max_rows(mix), ad::mean_rows(ad::abs(ad::scale(mix, 0.5))));
      auto rc = ad::rowwise_cosine(ad::vconcat<double>({a, a}), ad::vconcat<double>({ad::row(cb, 0), ad::row(cb, 1), ad::row(cb, 2), ad::row(cb, 3), ad::row(cb, 0), ad::row(cb, 1)}));
      return ad::add(ad::sum(pooled), ad::sum(rc));
    });
    CHECK_MESSAGE(all_pass(r), failing(r));
  }

  TEST_CASE("end-to-end total loss through BIM and LIM (d_b=8, n_L=4, 3 sentences)") {
    for (Variant v : {Variant::kFull, Variant::kNoAia, Variant::kNoBim, Variant::kLegalEmbeddingDistance}) {
      CAPTURE(to_string(v));
      auto model = lcmlai::testing::tiny_model<double>(lcmlai::testing::tiny_config(v));
      Gen g(6);
      MatrixXd x = g.matrix(3, 8), y = g.matrix(3, 8);
      const auto& params = model->parameters();
      auto loss = [&] {
        auto sx = model->case_side(x);
        auto sy = model->case_side(y);
        auto b = model->interact(sx, sy);
        auto main = losses::tape::cross_entropy(model->match_probabilities(b), 1);
        auto art = ad::sum_scalars<double>({model->article_loss(sx, {1, 0, 0, 1}), model->article_loss(sy, {0, 1, 0, 0})}, 0.5);
        return ad::add(art, main);
      };
      auto r = check_gradients(params, loss, 12);
      CHECK_MESSAGE(all_pass(r), failing(r));
    }
  }

  TEST_CASE("retrieval CoSENT through the full model") {
    auto model = lcmlai::testing::tiny_model<double>(lcmlai::testing::tiny_config());
    Gen g(7);
    MatrixXd q = g.matrix(3, 8);
    std::vector<MatrixXd> cands{g.matrix(2, 8), g.matrix(3, 8), g.matrix(4, 8)};
    const auto& params = model->parameters();
    auto loss = [&] {
      auto sq = model->case_side(q);
      std::vector<ad::Var<double>> scores;
      for (const auto& c : cands) scores.push_back(model->retrieval_score(model->interact(sq, model->case_side(c))));
      return losses::tape::cosent(ad::vconcat(scores), {2, 0, 1}, 20.0);
    };
    auto r = check_gradients(params, loss, 12);
    CHECK_MESSAGE(all_pass(r), failing(r));
  }
}
