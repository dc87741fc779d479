#include "dicegrad/grad_verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dicegrad/error.hpp"

namespace dicegrad {

BatchTensor finite_diff_grad(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                             double h, const AvailabilityMask* mask) {
  if (!(h > 0.0)) throw Error(ErrorCode::StepOutOfRange, "step must be positive");
  for (const double v : pred.values()) {
    if (v < h || v > 1.0 - h) {
      throw Error(ErrorCode::StepOutOfRange, "central stencil would leave [0,1]");
    }
  }
  std::vector<double> work = pred.to_vector();
  std::vector<double> grad(work.size());
  for (std::size_t k = 0; k < work.size(); ++k) {
    const double orig = work[k];
    work[k] = orig + h;
    const double up = dice_forward(gt, BatchTensor(pred.shape(), work), cfg, mask).value;
    work[k] = orig - h;
    const double down = dice_forward(gt, BatchTensor(pred.shape(), work), cfg, mask).value;
    work[k] = orig;
    grad[k] = (up - down) / (2.0 * h);
  }
  return BatchTensor(pred.shape(), std::move(grad));
}

TwoValueReport check_two_value(const BatchTensor& gt, const BatchTensor& grad,
                               const std::vector<SubsetSpec>& subsets, double cluster_tol) {
  if (gt.shape() != grad.shape()) throw Error(ErrorCode::ShapeMismatch, "gradient shape differs");
  TwoValueReport report;
  const auto y = gt.values();
  const auto g = grad.values();
  for (const auto& s : subsets) {
    std::vector<std::size_t> order(s.members);
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return g[l] < g[r]; });

    SubsetClusters cl{s.id, {}, {}, true};
    double anchor = 0.0;
    for (const std::size_t k : order) {
      const int label = y[k] != 0.0 ? 1 : 0;
      if (cl.values.empty() || g[k] - anchor > cluster_tol) {
        anchor = g[k];
        cl.values.push_back(g[k]);
        cl.label.push_back(label);
      } else if (cl.label.back() != label) {
        cl.label.back() = -1;
      }
    }
    const auto per_label = [&](int label) { return std::count(cl.label.begin(), cl.label.end(), label); };
    cl.pass = cl.values.size() <= 2 && per_label(-1) == 0 && per_label(0) <= 1 && per_label(1) <= 1;
    report.pass = report.pass && cl.pass;
    report.subsets.push_back(std::move(cl));
  }
  return report;
}

GradCheckReport compare_grads(const BatchTensor& analytic, const BatchTensor& numeric,
                              const GradTolerances& tolerances) {
  if (analytic.shape() != numeric.shape()) throw Error(ErrorCode::ShapeMismatch, "gradient shapes differ");
  GradCheckReport report;
  report.n_checked = analytic.size();
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double a = analytic[k];
    const double n = numeric[k];
    const double abs_err = std::abs(a - n);
    const double rel_err = abs_err / std::max({std::abs(a), std::abs(n), 1e-12});
    if (abs_err > report.max_abs_err || k == 0) {
      report.max_abs_err = abs_err;
      report.worst_index = k;
    }
    report.max_rel_err = std::max(report.max_rel_err, rel_err);
    if (!(rel_err <= tolerances.rel || abs_err <= tolerances.abs)) ++report.n_failed;
  }
  report.pass = report.n_failed == 0;
  return report;
}

}  // namespace dicegrad
