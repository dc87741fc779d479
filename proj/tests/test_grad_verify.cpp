#include <gtest/gtest.h>

#include <random>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/error.hpp"
#include "dicegrad/grad_verify.hpp"
#include "test_util.hpp"

using namespace dicegrad;

namespace {

DiceLossConfig image_cfg(double eps) {
  DiceLossConfig cfg;
  cfg.scheme = ReductionScheme::ImageWise;
  cfg.epsilon = eps;
  return cfg;
}

}  // namespace

TEST(FiniteDiff, HalfOverlapCase) {
  const Shape s{1, 1, 2};
  auto fd = finite_diff_grad(make_batch(s, {1, 0}, Role::GroundTruth), make_batch(s, {0.5, 0.5}, Role::Prediction),
                             image_cfg(0.0), 1e-4);
  EXPECT_NEAR(fd[0], -0.75, 1e-8);
  EXPECT_NEAR(fd[1], 0.25, 1e-8);
}

TEST(FiniteDiff, EmptyMapLargeEpsilon) {
  const Shape s{1, 1, 4};
  auto fd = finite_diff_grad(BatchTensor::zeros(s), make_batch(s, {0.5, 0.5, 0.5, 0.5}, Role::Prediction),
                             image_cfg(2.0), 1e-4);
  for (double v : fd.values()) EXPECT_NEAR(v, 0.125, 1e-8);
}

TEST(FiniteDiff, StepOutOfRange) {
  const Shape s{1, 1, 2};
  auto gt = make_batch(s, {1, 0}, Role::GroundTruth);
  auto pred = make_batch(s, {0.5, 0.5}, Role::Prediction);
  for (double h : {0.6, 0.0, -1e-5}) {
    try {
      finite_diff_grad(gt, pred, image_cfg(0.0), h);
      FAIL() << h;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::StepOutOfRange);
    }
  }
  auto edge = make_batch(s, {1.0, 0.5}, Role::Prediction);
  EXPECT_THROW(finite_diff_grad(gt, edge, image_cfg(0.0), 1e-5), Error);
}

TEST(TwoValue, AnalyticGradientPasses) {
  const Shape s{1, 1, 2};
  auto gt = make_batch(s, {1, 0}, Role::GroundTruth);
  auto grad = dice_backward(gt, make_batch(s, {0.5, 0.5}, Role::Prediction), image_cfg(0.0));
  auto rep = check_two_value(gt, grad, enumerate_subsets(ReductionScheme::ImageWise, s));
  EXPECT_TRUE(rep.pass);
  ASSERT_EQ(rep.subsets.size(), 1u);
  const auto& cl = rep.subsets[0];
  ASSERT_EQ(cl.values.size(), 2u);
  EXPECT_DOUBLE_EQ(cl.values[0], -0.75);
  EXPECT_EQ(cl.label[0], 1);
  EXPECT_DOUBLE_EQ(cl.values[1], 0.25);
  EXPECT_EQ(cl.label[1], 0);
}

TEST(TwoValue, RandomGradientFails) {
  std::mt19937_64 rng(9);
  const Shape s{1, 1, 12};
  auto gt = fixtures::random_gt(s, rng, 0.5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> g(12);
  for (auto& x : g) x = u(rng);
  auto rep = check_two_value(gt, BatchTensor(s, g), enumerate_subsets(ReductionScheme::ImageWise, s));
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.subsets[0].values.size(), 2u);
}

TEST(TwoValue, SameValueOnBothLabelsFails) {
  const Shape s{1, 1, 2};
  auto gt = make_batch(s, {1, 0}, Role::GroundTruth);
  auto rep = check_two_value(gt, BatchTensor(s, {0.3, 0.3}), enumerate_subsets(ReductionScheme::ImageWise, s));
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.subsets[0].label[0], -1);
}

TEST(TwoValue, LeafDroppedSubsetIsSingleZeroCluster) {
  const Shape s{2, 1, 3};
  auto gt = make_batch(s, {1, 0, 1, 0, 0, 0}, Role::GroundTruth);
  auto pred = make_batch(s, {0.3, 0.6, 0.2, 0.4, 0.5, 0.9}, Role::Prediction);
  DiceLossConfig cfg = image_cfg(1e-7);
  cfg.variant = DiceVariant::Leaf;
  auto grad = dice_backward(gt, pred, cfg);
  auto rep = check_two_value(gt, grad, enumerate_subsets(ReductionScheme::ImageWise, s));
  EXPECT_TRUE(rep.pass);
  ASSERT_EQ(rep.subsets[1].values.size(), 1u);
  EXPECT_EQ(rep.subsets[1].values[0], 0.0);
}

TEST(CompareGrads, IdenticalTensors) {
  std::mt19937_64 rng(4);
  auto t = fixtures::random_pred({2, 2, 3}, rng);
  auto rep = compare_grads(t, t);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.max_abs_err, 0.0);
  EXPECT_EQ(rep.max_rel_err, 0.0);
  EXPECT_EQ(rep.n_checked, 12u);
  EXPECT_EQ(rep.n_failed, 0u);
}

TEST(CompareGrads, InjectedFaultIsLocated) {
  std::mt19937_64 rng(6);
  const Shape s{2, 3, 8};
  auto gt = fixtures::random_gt(s, rng);
  auto pred = fixtures::random_pred(s, rng);
  auto cfg = image_cfg(1e-7);
  auto analytic = dice_backward(gt, pred, cfg).to_vector();
  auto numeric = finite_diff_grad(gt, pred, cfg);
  ASSERT_TRUE(compare_grads(BatchTensor(s, analytic), numeric).pass);
  analytic[13] += 1e-3;
  auto rep = compare_grads(BatchTensor(s, analytic), numeric);
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.worst_index, 13u);
  EXPECT_EQ(rep.n_failed, 1u);
  EXPECT_NEAR(rep.max_abs_err, 1e-3, 1e-8);
}

TEST(CompareGrads, AbsoluteToleranceRescuesTinyValues) {
  const Shape s{1, 1, 1};
  auto rep = compare_grads(BatchTensor(s, {1e-12}), BatchTensor(s, {5e-12}));
  EXPECT_TRUE(rep.pass);
  rep = compare_grads(BatchTensor(s, {1e-12}), BatchTensor(s, {5e-12}), {1e-5, 1e-13});
  EXPECT_FALSE(rep.pass);
}

TEST(CompareGrads, ShapeMismatch) {
  EXPECT_THROW(compare_grads(BatchTensor::zeros({1, 1, 2}), BatchTensor::zeros({1, 2, 1})), Error);
}

TEST(FiniteDiff, RandomInstancesEveryScheme) {
  std::mt19937_64 rng(123);
  for (auto scheme : {ReductionScheme::ImageWise, ReductionScheme::ClassWise, ReductionScheme::BatchWise,
                      ReductionScheme::AllWise}) {
    for (int k = 0; k < 100; ++k) {
      const Shape s{2, 3, 8};
      auto gt = fixtures::random_gt(s, rng);
      auto pred = fixtures::random_pred(s, rng);
      DiceLossConfig cfg;
      cfg.scheme = scheme;
      cfg.epsilon = k % 2 ? 1.0 : 1e-7;
      auto rep = compare_grads(dice_backward(gt, pred, cfg), finite_diff_grad(gt, pred, cfg));
      ASSERT_TRUE(rep.pass) << to_string(scheme) << " instance " << k << " worst " << rep.worst_index;
    }
  }
}
