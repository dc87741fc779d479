#pragma once

#include <cstddef>
#include <optional>
#include <variant>
#include <vector>

#include "dicegrad/tensor.hpp"

namespace dicegrad {

enum class DiceVariant { Standard, Leaf, Marginal };

std::string_view to_string(DiceVariant variant);
DiceVariant parse_variant(std::string_view name);

// Smoothing term: one scalar for every subset, or one entry per class
// (class-pure schemes only).
using Epsilon = std::variant<double, std::vector<double>>;

struct DiceLossConfig {
  ReductionScheme scheme = ReductionScheme::ImageWise;
  Epsilon epsilon = 1e-7;
  DiceVariant variant = DiceVariant::Standard;
  // Required iff variant == Marginal.
  std::optional<std::size_t> background_class;
  // Class channel removed from every subset before reduction, e.g. a background
  // map that should not contribute to the loss. Its gradient is zero.
  std::optional<std::size_t> ignored_class;
};

// Per (b, c): whether class c is annotated in batch element b.
class AvailabilityMask {
 public:
  AvailabilityMask() = default;
  AvailabilityMask(std::size_t batch, std::size_t classes, bool available = true)
      : batch_(batch), classes_(classes), bits_(batch * classes, available ? 1 : 0) {}

  static AvailabilityMask from_rows(const std::vector<std::vector<bool>>& rows);

  std::size_t batch() const noexcept { return batch_; }
  std::size_t classes() const noexcept { return classes_; }
  bool available(std::size_t b, std::size_t c) const { return bits_[b * classes_ + c] != 0; }
  void set(std::size_t b, std::size_t c, bool available) { bits_[b * classes_ + c] = available ? 1 : 0; }
  bool all_available() const noexcept;

 private:
  std::size_t batch_ = 0;
  std::size_t classes_ = 0;
  std::vector<unsigned char> bits_;
};

struct SubsetResult {
  std::size_t id = 0;
  SubsetStats stats;
  double epsilon = 0.0;
  double sdsc = 0.0;
};

struct LossOutput {
  double value = 0.0;
  std::vector<SubsetResult> per_subset;
  std::size_t effective_subset_count = 0;
};

struct DiceEvaluation {
  LossOutput loss;
  BatchTensor gradient;  // dDL / d pred, same shape as the prediction
};

LossOutput dice_forward(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                        const AvailabilityMask* mask = nullptr);

BatchTensor dice_backward(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                          const AvailabilityMask* mask = nullptr);

// Forward and backward sharing one pass over the subsets.
DiceEvaluation dice_evaluate(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                             const AvailabilityMask* mask = nullptr);

struct ClassRouting {
  // column[b][c]: column of the merged tensors that original class c of batch element b feeds.
  std::vector<std::vector<std::size_t>> column;
  // removed[b][c]: class c was folded into the background for batch element b.
  std::vector<std::vector<bool>> removed;
};

struct MarginalMerge {
  BatchTensor gt;
  BatchTensor pred;
  ClassRouting routing;
};

// Folds unavailable classes into the background column. The merged tensors keep
// the input shape; removed columns are zero and excluded from the partition.
MarginalMerge marginal_merge(const BatchTensor& gt, const BatchTensor& pred, const AvailabilityMask& mask,
                             std::size_t background_class);

// Keeps subsets with a non-empty ground truth, in order.
std::vector<SubsetSpec> leaf_filter(const BatchTensor& gt, const std::vector<SubsetSpec>& subsets);

// Validates an epsilon against a scheme and class count; throws EpsilonShapeInvalid.
void validate_epsilon(const Epsilon& epsilon, ReductionScheme scheme, std::size_t classes);

// Smoothing applied to one subset.
double subset_epsilon(const Epsilon& epsilon, const SubsetSpec& subset);

}  // namespace dicegrad
