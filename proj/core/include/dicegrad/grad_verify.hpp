#pragma once

#include <cstddef>
#include <vector>

#include "dicegrad/dice_loss.hpp"
#include "dicegrad/tensor.hpp"

namespace dicegrad {

struct GradTolerances {
  double rel = 1e-5;
  double abs = 1e-9;
};

struct GradCheckReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;  // element with the largest absolute error
  std::size_t n_checked = 0;
  std::size_t n_failed = 0;
  bool pass = true;  // every element within rel OR abs tolerance
};

struct SubsetClusters {
  std::size_t subset_id = 0;
  std::vector<double> values;      // one representative per cluster
  std::vector<int> label;          // y of the cluster members, -1 if mixed
  bool pass = true;
};

struct TwoValueReport {
  std::vector<SubsetClusters> subsets;
  bool pass = true;
};

// Central differences of dice_forward, one pair of evaluations per element.
// Throws StepOutOfRange unless every prediction lies in [h, 1 - h].
BatchTensor finite_diff_grad(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                             double h = 1e-5, const AvailabilityMask* mask = nullptr);

// Within each subset the gradient may take two values at most, one per label.
TwoValueReport check_two_value(const BatchTensor& gt, const BatchTensor& grad,
                               const std::vector<SubsetSpec>& subsets, double cluster_tol = 1e-12);

GradCheckReport compare_grads(const BatchTensor& analytic, const BatchTensor& numeric,
                              const GradTolerances& tolerances = {});

}  // namespace dicegrad
