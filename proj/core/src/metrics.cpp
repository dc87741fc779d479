#include "dicegrad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dicegrad/error.hpp"

namespace dicegrad {
namespace {

void check_binary_pair(std::span<const double> gt, std::span<const double> pred) {
  if (gt.size() != pred.size()) throw Error(ErrorCode::ShapeMismatch, "maps differ in size");
  for (std::size_t k = 0; k < gt.size(); ++k) {
    if ((gt[k] != 0.0 && gt[k] != 1.0) || (pred[k] != 0.0 && pred[k] != 1.0)) {
      throw Error(ErrorCode::RangeViolation, "hard metrics need binary maps");
    }
  }
}

// Counter-based stream so each resample can be drawn independently of the others.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

}  // namespace

double hard_dsc(std::span<const double> gt_map, std::span<const double> pred_map) {
  check_binary_pair(gt_map, pred_map);
  double inter = 0.0, total = 0.0;
  for (std::size_t k = 0; k < gt_map.size(); ++k) {
    inter += gt_map[k] * pred_map[k];
    total += gt_map[k] + pred_map[k];
  }
  return total == 0.0 ? 1.0 : 2.0 * inter / total;
}

double volume_difference(std::span<const double> gt_map, std::span<const double> pred_map) {
  check_binary_pair(gt_map, pred_map);
  return std::accumulate(pred_map.begin(), pred_map.end(), 0.0) -
         std::accumulate(gt_map.begin(), gt_map.end(), 0.0);
}

BatchTensor binarize(const BatchTensor& pred, Head head) {
  const Shape& s = pred.shape();
  std::vector<double> out(s.size(), 0.0);
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t i = 0; i < s.voxels; ++i) {
      if (head == Head::Sigmoid) {
        for (std::size_t c = 0; c < s.classes; ++c) out[s.index(b, c, i)] = pred.at(b, c, i) >= 0.5 ? 1.0 : 0.0;
        continue;
      }
      std::size_t best = 0;
      for (std::size_t c = 1; c < s.classes; ++c) {
        if (pred.at(b, c, i) > pred.at(b, best, i)) best = c;
      }
      out[s.index(b, best, i)] = 1.0;
    }
  }
  return BatchTensor(s, std::move(out));
}

SubjectMetrics subject_metrics(std::uint64_t subject_id, const BatchTensor& gt, const BatchTensor& pred_binary,
                               std::span<const std::size_t> classes) {
  if (gt.shape() != pred_binary.shape() || gt.shape().batch != 1) {
    throw Error(ErrorCode::ShapeMismatch, "subject metrics need matching (1, C, I) maps");
  }
  const std::size_t voxels = gt.shape().voxels;
  SubjectMetrics out{subject_id, {}};
  for (const std::size_t c : classes) {
    const auto y = gt.values().subspan(c * voxels, voxels);
    const auto p = pred_binary.values().subspan(c * voxels, voxels);
    const double pv = std::accumulate(p.begin(), p.end(), 0.0);
    const double tv = std::accumulate(y.begin(), y.end(), 0.0);
    out.classes.push_back({c, hard_dsc(y, p), volume_difference(y, p), pv, tv});
  }
  return out;
}

RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw Error(ErrorCode::DegenerateLabels, "ROC needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == threshold; ++k) (labels[order[k]] ? tp : fp) += 1.0;
    curve.points.push_back({threshold, fp / negatives, tp / positives});
  }
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const auto& p0 = curve.points[k - 1];
    const auto& p1 = curve.points[k];
    curve.auc += (p1.fpr - p0.fpr) * (p1.tpr + p0.tpr) / 2.0;
  }
  return curve;
}

double bootstrap_compare(std::span<const double> a, std::span<const double> b, std::size_t n_resamples,
                         std::uint64_t seed) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "paired lists differ in length");
  if (a.size() < 2) throw Error(ErrorCode::LengthMismatch, "bootstrap needs at least two subjects");
  if (n_resamples == 0) throw Error(ErrorCode::InvalidConfig, "n_resamples must be positive");
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t k = 0; k < n; ++k) diff[k] = a[k] - b[k];
  const double observed = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
  if (observed == 0.0) return 1.0;

  std::size_t contradicting = 0;
  for (std::size_t r = 0; r < n_resamples; ++r) {
    SplitMix64 gen{seed ^ (0xD1B54A32D192ED03ull * (r + 1))};
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) total += diff[pick(gen)];
    const double mean = total / static_cast<double>(n);
    if (mean * observed <= 0.0) ++contradicting;
  }
  return std::min(1.0, 2.0 * static_cast<double>(contradicting) / static_cast<double>(n_resamples));
}

}  // namespace dicegrad
