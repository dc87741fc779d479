#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/tensor.hpp"

namespace dicegrad {

// Smoothing derived from dataset foreground volumes: the mean per-subset
// foreground voxel count, empty maps included.
struct EpsilonCalibration {
  ReductionScheme scheme = ReductionScheme::ImageWise;
  std::vector<std::pair<std::size_t, double>> per_class;  // class-pure schemes
  std::optional<double> global;                           // ClassWise / AllWise
  bool all_empty = false;                                 // every map was empty, epsilon is 0

  Epsilon to_epsilon() const;
};

// Each tensor is reduced with the scheme on its own, so for BatchWise and
// AllWise the grouping of samples into tensors matters.
EpsilonCalibration calibrate_epsilon(std::span<const BatchTensor> gt_maps, ReductionScheme scheme);

// Intersection = a * v_hat, denominator sum = b * v_hat.
struct BalanceParams {
  double a = 0.5;
  double b = 2.0;
  double v_hat = 1.0;
};

// Smallest non-negative epsilon equating the background-voxel gradient of an
// empty map with that of a labeled one: 2a (v + e)^2 = e b^2 v.
double solve_balance_epsilon(const BalanceParams& params);

}  // namespace dicegrad
