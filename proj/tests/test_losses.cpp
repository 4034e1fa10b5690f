#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctt/losses.hpp"
#include "ctt/rng.hpp"
#include "test_support.hpp"

using namespace ctt;

namespace {

// Independent per-sample oracle for the margin penalty.
double acl_oracle(const std::vector<double>& pred, const std::vector<double>& pre,
                  const std::vector<int>& label, double threshold) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i] - pre[i] - threshold;
    total += label[i] == 1 ? std::max(0.0, -p) : std::max(0.0, p);
  }
  return total / static_cast<double>(pred.size());
}

}  // namespace

TEST_CASE("regression loss examples") {
  Tensor same({3, 1}, {0.3, 0.8, 1.1});
  CHECK(regression_loss(same, same).at(0) == 0.0);

  Tensor pred({1, 1}, {0.5});
  Tensor truth({1, 1}, {0.2});
  CHECK(regression_loss(pred, truth).at(0) == doctest::Approx(0.09));

  CHECK_THROWS_AS(regression_loss(Tensor({0, 1}), Tensor({0, 1})),
                  std::invalid_argument);
}

TEST_CASE("regression loss gradient is 2(pred-true)/N") {
  Rng rng(41);
  Tensor pred = ctt_test::random_tensor({5, 1}, rng, true, 0.0, 1.2);
  Tensor truth = ctt_test::random_tensor({5, 1}, rng, false, 0.0, 1.2);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(regression_loss(pred, truth));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(pred.grad()[i] ==
          doctest::Approx(2.0 * (pred.at(i) - truth.at(i)) / 5.0));
  }
  const double err = ctt_test::gradcheck(
      [&] { return regression_loss(pred, truth); }, {pred});
  CHECK(err < 1e-4);
}

TEST_CASE("recovery label strict threshold") {
  CHECK(recovery_label(0.6, 0.3, 0.2) == 1);
  CHECK(recovery_label(0.5, 0.3, 0.2) == 0);  // exactly at threshold
  CHECK(recovery_label(0.5, 0.3, 0.19999999) == 1);
  CHECK(recovery_label(0.4, 0.4, 0.2) == 0);
}

TEST_CASE("recovery label monotonicity") {
  Rng rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const double pre = rng.uniform(0.0, 1.0);
    const double post = rng.uniform(0.0, 1.5);
    const double eps = rng.uniform(0.0, 0.3);
    CHECK(recovery_label(post + eps, pre, 0.2) >= recovery_label(post, pre, 0.2));
    CHECK(recovery_label(post, pre + eps, 0.2) <= recovery_label(post, pre, 0.2));
  }
}

TEST_CASE("auxiliary loss hand examples") {
  // Y=1, margin 0.5 above pre: correct side, no penalty.
  Tensor p1({1, 1}, {0.8});
  CHECK(auxiliary_classification_loss(p1, {0.3}, {1}, 0.2).at(0) == 0.0);
  // Y=1 but only 0.1 above pre: P = -0.1, penalty 0.1.
  Tensor p2({1, 1}, {0.4});
  CHECK(auxiliary_classification_loss(p2, {0.3}, {1}, 0.2).at(0) ==
        doctest::Approx(0.1));
  // Y=0 but 0.35 above pre: P = 0.15, penalty 0.15.
  Tensor p3({1, 1}, {0.65});
  CHECK(auxiliary_classification_loss(p3, {0.3}, {0}, 0.2).at(0) ==
        doctest::Approx(0.15));
}

TEST_CASE("auxiliary loss matches oracle on 1000 random triples") {
  Rng rng(47);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> pred(n), pre(n);
    std::vector<int> label(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.uniform(0.0, 1.5);
      pre[i] = rng.uniform(0.0, 1.0);
      label[i] = static_cast<int>(rng.below(2));
    }
    Tensor pt({n, 1}, pred);
    const double got = auxiliary_classification_loss(pt, pre, label, 0.2).at(0);
    const double want = acl_oracle(pred, pre, label, 0.2);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("auxiliary loss zero iff margin-consistent") {
  Rng rng(53);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> pred(n), pre(n);
    std::vector<int> label(n);
    for (std::size_t i = 0; i < n; ++i) {
      pre[i] = rng.uniform(0.1, 0.8);
      label[i] = static_cast<int>(rng.below(2));
      // Place the prediction strictly on the label's side of the margin.
      const double offset = rng.uniform(0.01, 0.3);
      pred[i] = pre[i] + 0.2 + (label[i] == 1 ? offset : -offset);
    }
    Tensor pt({n, 1}, pred);
    CHECK(auxiliary_classification_loss(pt, pre, label, 0.2).at(0) == 0.0);

    // Flip one label: the loss must become strictly positive.
    label[0] = 1 - label[0];
    CHECK(auxiliary_classification_loss(pt, pre, label, 0.2).at(0) > 0.0);
  }
}

TEST_CASE("auxiliary loss differentiable away from the margin") {
  Rng rng(59);
  Tensor pred = ctt_test::random_tensor({6, 1}, rng, true, 0.0, 1.5);
  std::vector<double> pre(6);
  std::vector<int> label(6);
  for (std::size_t i = 0; i < 6; ++i) {
    pre[i] = rng.uniform(0.0, 1.0);
    label[i] = static_cast<int>(rng.below(2));
  }
  const double err = ctt_test::gradcheck(
      [&] { return auxiliary_classification_loss(pred, pre, label, 0.2); },
      {pred});
  CHECK(err < 1e-4);
}

TEST_CASE("total loss composition") {
  Tensor reg({1}, {0.1});
  Tensor cls({1}, {0.05});
  CHECK(total_loss(reg, cls, 2.0).at(0) == doctest::Approx(0.2));
  // lambda = 0 reduces to the regression term bitwise.
  CHECK(total_loss(reg, cls, 0.0).at(0) == 0.1);
  Tensor zero_cls({1}, {0.0});
  CHECK(total_loss(reg, zero_cls, 7.5).at(0) == 0.1);
}

TEST_CASE("loss config validation") {
  LossConfig ok;
  CHECK_NOTHROW(ok.validate());
  LossConfig bad_lambda;
  bad_lambda.lambda = -1.0;
  CHECK_THROWS_AS(bad_lambda.validate(), std::invalid_argument);
  LossConfig bad_threshold;
  bad_threshold.recovery_threshold = 0.0;
  CHECK_THROWS_AS(bad_threshold.validate(), std::invalid_argument);
}
