#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/epsilon.hpp"
#include "dicegrad/grad_verify.hpp"
#include "dicegrad/synth.hpp"
#include "test_util.hpp"

using namespace dicegrad;
using fixtures::random_gt;
using fixtures::random_onehot;
using fixtures::random_pred;
using fixtures::random_softmax;

namespace {

constexpr ReductionScheme kSchemes[] = {ReductionScheme::ImageWise, ReductionScheme::ClassWise,
                                        ReductionScheme::BatchWise, ReductionScheme::AllWise};

const Shape kShapes[] = {{1, 1, 8}, {2, 1, 8}, {2, 3, 8}, {4, 3, 16}, {3, 2, 1}, {1, 5, 7}};

DiceLossConfig make_cfg(ReductionScheme scheme, Epsilon eps, DiceVariant variant = DiceVariant::Standard) {
  DiceLossConfig cfg;
  cfg.scheme = scheme;
  cfg.epsilon = std::move(eps);
  cfg.variant = variant;
  return cfg;
}

// Ground truth whose every subset under `scheme` holds at least one foreground voxel.
BatchTensor nonempty_gt(const Shape& s, ReductionScheme scheme, std::mt19937_64& rng) {
  auto v = random_gt(s, rng).to_vector();
  for (const auto& sub : enumerate_subsets(scheme, s)) {
    std::uniform_int_distribution<std::size_t> pick(0, sub.members.size() - 1);
    v[sub.members[pick(rng)]] = 1.0;
  }
  return make_batch(s, std::move(v), Role::GroundTruth);
}

void expect_same(const DiceEvaluation& a, const DiceEvaluation& b, double tol) {
  EXPECT_NEAR(a.loss.value, b.loss.value, tol);
  ASSERT_EQ(a.gradient.size(), b.gradient.size());
  for (std::size_t k = 0; k < a.gradient.size(); ++k) EXPECT_NEAR(a.gradient[k], b.gradient[k], tol) << k;
}

}  // namespace

TEST(Partition, DisjointCoverEqualSizes) {
  for (const auto& s : kShapes) {
    for (auto scheme : kSchemes) {
      auto subsets = enumerate_subsets(scheme, s);
      std::vector<int> hits(s.size(), 0);
      for (const auto& sub : subsets) {
        EXPECT_EQ(sub.members.size(), subsets.front().members.size());
        for (auto k : sub.members) hits[k]++;
      }
      EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; })) << to_string(scheme);
    }
  }
}

TEST(Partition, SubsetsCoincideUnderDegeneracy) {
  auto as_sets = [](ReductionScheme scheme, const Shape& s) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& sub : enumerate_subsets(scheme, s)) out.push_back(sub.members);
    return out;
  };
  EXPECT_EQ(as_sets(ReductionScheme::ImageWise, {1, 4, 5}), as_sets(ReductionScheme::BatchWise, {1, 4, 5}));
  EXPECT_EQ(as_sets(ReductionScheme::ClassWise, {1, 4, 5}), as_sets(ReductionScheme::AllWise, {1, 4, 5}));
  EXPECT_EQ(as_sets(ReductionScheme::BatchWise, {3, 1, 5}), as_sets(ReductionScheme::AllWise, {3, 1, 5}));
  EXPECT_EQ(as_sets(ReductionScheme::ImageWise, {3, 1, 5}), as_sets(ReductionScheme::ClassWise, {3, 1, 5}));
  EXPECT_NE(as_sets(ReductionScheme::ImageWise, {2, 2, 5}), as_sets(ReductionScheme::BatchWise, {2, 2, 5}));
}

TEST(SubsetReduce, LinearOverSplitsAndBounded) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s{2, 3, 8};
    auto gt = random_gt(s, rng);
    auto pred = random_pred(s, rng);
    for (const auto& sub : enumerate_subsets(kSchemes[trial % 4], s)) {
      std::uniform_int_distribution<std::size_t> cut(0, sub.members.size());
      const std::size_t m = cut(rng);
      SubsetSpec left{0, {sub.members.begin(), sub.members.begin() + static_cast<std::ptrdiff_t>(m)}, {}, {}};
      SubsetSpec right{1, {sub.members.begin() + static_cast<std::ptrdiff_t>(m), sub.members.end()}, {}, {}};
      auto whole = subset_reduce(gt, pred, sub);
      auto l = subset_reduce(gt, pred, left);
      auto r = subset_reduce(gt, pred, right);
      EXPECT_NEAR(whole.intersection, l.intersection + r.intersection, 1e-12);
      EXPECT_NEAR(whole.gt_sum, l.gt_sum + r.gt_sum, 1e-12);
      EXPECT_NEAR(whole.pred_sum, l.pred_sum + r.pred_sum, 1e-12);
      EXPECT_LE(whole.intersection, std::min(whole.gt_sum, whole.pred_sum));
      EXPECT_GE(whole.intersection, 0.0);
    }
  }
}

TEST(GradientOracle, EverySchemeShapeAndEpsilon) {
  std::mt19937_64 rng(2024);
  for (const auto& s : kShapes) {
    for (auto scheme : kSchemes) {
      for (int k = 0; k < 100; ++k) {
        auto gt = k % 3 == 0 ? nonempty_gt(s, scheme, rng) : random_gt(s, rng);
        auto pred = random_pred(s, rng);
        double eps = k % 3 == 0 ? 0.0 : (k % 3 == 1 ? 1e-7 : 0.0);
        if (k % 3 == 2) {
          std::vector<BatchTensor> maps{gt};
          auto cal = calibrate_epsilon(maps, ReductionScheme::AllWise);
          eps = *cal.global;
        }
        auto cfg = make_cfg(scheme, eps);
        auto analytic = dice_backward(gt, pred, cfg);
        auto rep = compare_grads(analytic, finite_diff_grad(gt, pred, cfg));
        ASSERT_TRUE(rep.pass) << to_string(scheme) << " k=" << k << " eps=" << eps << " abs=" << rep.max_abs_err;
        auto tv = check_two_value(gt, analytic, enumerate_subsets(scheme, s));
        ASSERT_TRUE(tv.pass) << to_string(scheme) << " k=" << k;
      }
    }
  }
}

TEST(GradientOracle, LeafIncludingDroppedSubsets) {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 100; ++k) {
    const Shape s{3, 2, 6};
    auto v = random_gt(s, rng).to_vector();
    for (std::size_t i = 0; i < 6; ++i) v[s.index(k % 3, k % 2, i)] = 0.0;
    auto gt = make_batch(s, v, Role::GroundTruth);
    auto pred = random_pred(s, rng);
    auto cfg = make_cfg(k % 2 ? ReductionScheme::ImageWise : ReductionScheme::BatchWise, 1e-7, DiceVariant::Leaf);
    auto analytic = dice_backward(gt, pred, cfg);
    auto numeric = finite_diff_grad(gt, pred, cfg);
    ASSERT_TRUE(compare_grads(analytic, numeric).pass) << k;
    if (cfg.scheme == ReductionScheme::ImageWise) {
      for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(analytic.at(k % 3, k % 2, i), 0.0);
        EXPECT_EQ(numeric.at(k % 3, k % 2, i), 0.0);
      }
    }
  }
}

TEST(PerfectPrediction, LossIsExactlyZero) {
  std::mt19937_64 rng(3);
  for (const auto& s : kShapes) {
    for (auto scheme : kSchemes) {
      auto gt = random_gt(s, rng);
      auto pred = make_batch(s, gt.to_vector(), Role::Prediction);
      for (double eps : {0.0, 1e-7, 3.0}) {
        bool any_empty = false;
        for (const auto& sub : enumerate_subsets(scheme, s)) any_empty |= subset_reduce(gt, pred, sub).gt_sum == 0.0;
        if (eps == 0.0 && any_empty) continue;
        EXPECT_EQ(dice_forward(gt, pred, make_cfg(scheme, eps)).value, 0.0);
      }
      EXPECT_EQ(dice_forward(BatchTensor::zeros(s), BatchTensor::zeros(s), make_cfg(scheme, 1e-7)).value, 0.0);
    }
  }
}

TEST(Degeneracy, SchemeEqualities) {
  std::mt19937_64 rng(4);
  struct Case {
    ReductionScheme a, b;
    Shape shape;
  };
  const Case cases[] = {
      {ReductionScheme::ImageWise, ReductionScheme::BatchWise, {1, 3, 9}},
      {ReductionScheme::ClassWise, ReductionScheme::AllWise, {1, 3, 9}},
      {ReductionScheme::BatchWise, ReductionScheme::AllWise, {4, 1, 9}},
      {ReductionScheme::ImageWise, ReductionScheme::ClassWise, {4, 1, 9}},
  };
  for (const auto& c : cases) {
    for (int k = 0; k < 50; ++k) {
      auto gt = random_gt(c.shape, rng);
      auto pred = random_pred(c.shape, rng);
      const double eps = k % 2 ? 1e-7 : 0.5;
      expect_same(dice_evaluate(gt, pred, make_cfg(c.a, eps)), dice_evaluate(gt, pred, make_cfg(c.b, eps)), 1e-12);
    }
  }
}

TEST(MissingLabel, EmptySubsetGradients) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Shape s{2, 2, 10};
    auto v = random_gt(s, rng).to_vector();
    for (std::size_t i = 0; i < 10; ++i) v[s.index(1, 0, i)] = 0.0;
    auto gt = make_batch(s, v, Role::GroundTruth);
    auto pred = random_pred(s, rng);
    double pred_sum = 0.0;
    for (std::size_t i = 0; i < 10; ++i) pred_sum += pred.at(1, 0, i);
    ASSERT_GE(pred_sum, 0.2);

    auto g0 = dice_backward(gt, pred, make_cfg(ReductionScheme::ImageWise, 0.0));
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(g0.at(1, 0, i), 0.0);

    const double eps = 1e-7;
    auto g = dice_backward(gt, pred, make_cfg(ReductionScheme::ImageWise, eps));
    const double bound = pred_sum >= 1.0 ? eps / (pred_sum * pred_sum) : eps / ((pred_sum + eps) * (pred_sum + eps));
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_GE(g.at(1, 0, i), 0.0);
      EXPECT_LE(g.at(1, 0, i), bound * (1 + 1e-12));
    }
  }
}

TEST(Variants, MarginalEqualsStandardWhenAllAvailable) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 30; ++k) {
    const Shape s{2, 4, 7};
    auto gt = random_onehot(s, rng);
    auto pred = random_softmax(s, rng);
    auto scheme = k % 2 ? ReductionScheme::ImageWise : ReductionScheme::AllWise;
    auto standard = make_cfg(scheme, 1e-7);
    standard.background_class = 0;
    auto marginal = standard;
    marginal.variant = DiceVariant::Marginal;
    AvailabilityMask mask(2, 4);
    auto a = dice_evaluate(gt, pred, standard);
    auto b = dice_evaluate(gt, pred, marginal, &mask);
    EXPECT_EQ(a.loss.value, b.loss.value);
    EXPECT_EQ(a.gradient, b.gradient);
  }
}

TEST(Variants, LeafEqualsStandardWhenNothingEmpty) {
  std::mt19937_64 rng(7);
  for (const auto& s : kShapes) {
    for (auto scheme : kSchemes) {
      auto gt = nonempty_gt(s, scheme, rng);
      auto pred = random_pred(s, rng);
      auto a = dice_evaluate(gt, pred, make_cfg(scheme, 1e-7));
      auto b = dice_evaluate(gt, pred, make_cfg(scheme, 1e-7, DiceVariant::Leaf));
      EXPECT_EQ(a.loss.value, b.loss.value);
      EXPECT_EQ(a.gradient, b.gradient);
    }
  }
}

TEST(Forward, SdscBoundedAndDeterministic) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 50; ++k) {
    const Shape s{3, 2, 5};
    auto gt = random_gt(s, rng);
    auto pred = random_pred(s, rng);
    auto cfg = make_cfg(kSchemes[k % 4], 0.01 + k);
    auto a = dice_evaluate(gt, pred, cfg);
    for (const auto& r : a.loss.per_subset) {
      EXPECT_GE(r.sdsc, 0.0);
      EXPECT_LE(r.sdsc, 1.0);
    }
    auto b = dice_evaluate(gt, pred, cfg);
    EXPECT_EQ(a.loss.value, b.loss.value);
    EXPECT_EQ(a.gradient, b.gradient);
  }
}

TEST(Calibration, OrderAndGroupingInvariance) {
  std::mt19937_64 rng(9);
  std::vector<BatchTensor> maps;
  for (int k = 0; k < 12; ++k) maps.push_back(random_gt({1, 3, 20}, rng, k % 4 ? 0.3 : 0.0));
  for (auto scheme : {ReductionScheme::ImageWise, ReductionScheme::ClassWise}) {
    auto base = calibrate_epsilon(maps, scheme);
    auto shuffled = maps;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto perm = calibrate_epsilon(shuffled, scheme);
    std::vector<BatchTensor> grouped;
    for (std::size_t k = 0; k < maps.size(); k += 3) {
      grouped.push_back(stack_batch(std::span<const BatchTensor>(shuffled).subspan(k, 3)));
    }
    auto batched = calibrate_epsilon(grouped, scheme);
    EXPECT_EQ(base.per_class, perm.per_class);
    EXPECT_EQ(base.global, perm.global);
    EXPECT_EQ(base.per_class, batched.per_class);
    EXPECT_EQ(base.global, batched.global);
  }
}

TEST(Calibration, PartialNeverExceedsFull) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    auto full = generate_binary({}, seed);
    auto part = apply_partial(full, {std::nullopt, SampleTag::GradeB, PartialAction::EmptyMap});
    auto ef = calibrate_epsilon(full.gt_maps(), ReductionScheme::ImageWise).per_class[0].second;
    auto ep = calibrate_epsilon(part.gt_maps(), ReductionScheme::ImageWise).per_class[0].second;
    EXPECT_LT(ep, ef);
  }
}

TEST(Balance, IdentityForRandomVolumes) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> vol(1, 100000);
  for (int k = 0; k < 200; ++k) {
    const double v = vol(rng);
    EXPECT_EQ(solve_balance_epsilon({0.5, 2.0, v}), v);
  }
}
