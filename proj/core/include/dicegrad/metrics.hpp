#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dicegrad/tensor.hpp"
#include "dicegrad/trainer.hpp"

namespace dicegrad {

// Hard DSC of two binary maps; 1 when both are empty.
double hard_dsc(std::span<const double> gt_map, std::span<const double> pred_map);

// |pred| - |gt| in voxels; negative means under-segmentation.
double volume_difference(std::span<const double> gt_map, std::span<const double> pred_map);

// Sigmoid: p >= 0.5. Softmax: one-hot argmax, ties to the lowest class index.
BatchTensor binarize(const BatchTensor& pred, Head head);

struct ClassMetrics {
  std::size_t class_index = 0;
  double dsc = 0.0;
  double delta_v = 0.0;
  double pred_volume = 0.0;
  double true_volume = 0.0;
};

struct SubjectMetrics {
  std::uint64_t subject_id = 0;
  std::vector<ClassMetrics> classes;
};

// Metrics for the listed classes of a (1, C, I) ground truth and binarized prediction.
SubjectMetrics subject_metrics(std::uint64_t subject_id, const BatchTensor& gt, const BatchTensor& pred_binary,
                               std::span<const std::size_t> classes);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // thresholds descending, FPR non-decreasing
  double auc = 0.0;
};

// Scores at or above a threshold are called positive. Thresholds are +inf,
// every distinct score, and -inf; tied scores cross together.
RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& labels);

// Two-sided paired bootstrap over subjects: share of resampled mean
// differences whose sign contradicts the observed one, doubled, clamped to 1.
double bootstrap_compare(std::span<const double> a, std::span<const double> b, std::size_t n_resamples = 10000,
                         std::uint64_t seed = 0);

}  // namespace dicegrad
