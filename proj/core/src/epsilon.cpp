#include "dicegrad/epsilon.hpp"

#include <cmath>
#include <algorithm>

#include "dicegrad/error.hpp"

namespace dicegrad {

Epsilon EpsilonCalibration::to_epsilon() const {
  if (global) return *global;
  std::vector<double> values(per_class.size(), 0.0);
  for (const auto& [c, e] : per_class) values.at(c) = e;
  return values;
}

EpsilonCalibration calibrate_epsilon(std::span<const BatchTensor> gt_maps, ReductionScheme scheme) {
  if (gt_maps.empty()) throw Error(ErrorCode::EmptyDataset, "calibration needs at least one map");
  const std::size_t classes = gt_maps.front().shape().classes;

  // Integer voxel counts are summed exactly, so the mean does not depend on order.
  std::vector<double> totals(classes, 0.0);
  std::vector<std::size_t> counts(classes, 0);
  double global_total = 0.0;
  std::size_t global_count = 0;

  for (const auto& gt : gt_maps) {
    if (gt.shape().classes != classes) {
      throw Error(ErrorCode::ShapeMismatch, "all maps must have the same class count");
    }
    validate_role(gt, Role::GroundTruth);
    const auto y = gt.values();
    for (const auto& s : enumerate_subsets(scheme, gt.shape())) {
      double volume = 0.0;
      for (const std::size_t k : s.members) volume += y[k];
      global_total += volume;
      ++global_count;
      if (is_class_pure(scheme)) {
        totals[*s.class_tag] += volume;
        ++counts[*s.class_tag];
      }
    }
  }

  EpsilonCalibration out;
  out.scheme = scheme;
  out.all_empty = global_total == 0.0;
  if (is_class_pure(scheme)) {
    for (std::size_t c = 0; c < classes; ++c) {
      out.per_class.emplace_back(c, totals[c] / static_cast<double>(counts[c]));
    }
  } else {
    out.global = global_total / static_cast<double>(global_count);
  }
  return out;
}

double solve_balance_epsilon(const BalanceParams& params) {
  const auto [a, b, v] = params;
  if (!(a > 0.0 && a <= 1.0) || !(b > 0.0 && b <= 4.0) || !(v > 0.0) || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidBalanceParams, "need a in (0,1], b in (0,4], v_hat > 0");
  }
  // 2a e^2 + (4a - b^2) v e + 2a v^2 = 0
  const double qa = 2.0 * a;
  const double qb = (4.0 * a - b * b) * v;
  const double qc = 2.0 * a * v * v;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) throw Error(ErrorCode::NoRealRoot, "balance equation has no real root");
  // Real roots share the sign of -qb; their product qc/qa is positive, so both are
  // positive here. Stable form: the small root is qc / q.
  const double q = -0.5 * (qb + std::copysign(std::sqrt(disc), qb));
  if (q <= 0.0) throw Error(ErrorCode::NoRealRoot, "balance equation has no non-negative root");
  const double large = q / qa;
  const double small = qc / q;
  return std::min(small, large);
}

}  // namespace dicegrad
