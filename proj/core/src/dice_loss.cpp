#include "dicegrad/dice_loss.hpp"

#include <cmath>
#include <string>

#include "dicegrad/error.hpp"

namespace dicegrad {
namespace {

constexpr double kDistributionTol = 1e-6;

struct Prepared {
  BatchTensor gt;
  BatchTensor pred;
  std::vector<SubsetSpec> subsets;
  std::optional<ClassRouting> routing;
  bool leaf = false;
};

// Removes members whose (b, c) cell is excluded; drops subsets left empty.
std::vector<SubsetSpec> restrict_subsets(std::vector<SubsetSpec> subsets, const Shape& shape,
                                         const std::vector<unsigned char>& excluded_cells) {
  std::vector<SubsetSpec> out;
  out.reserve(subsets.size());
  const std::size_t vox = shape.voxels;
  for (auto& s : subsets) {
    std::erase_if(s.members, [&](std::size_t k) { return excluded_cells[k / vox] != 0; });
    if (!s.members.empty()) out.push_back(std::move(s));
  }
  return out;
}

Prepared prepare(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                 const AvailabilityMask* mask) {
  if (gt.shape() != pred.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "ground truth and prediction shapes differ");
  }
  validate_role(gt, Role::GroundTruth);
  validate_role(pred, Role::Prediction);
  const Shape& shape = gt.shape();
  validate_epsilon(cfg.epsilon, cfg.scheme, shape.classes);
  if (cfg.ignored_class && *cfg.ignored_class >= shape.classes) {
    throw Error(ErrorCode::InvalidConfig, "ignored class out of range");
  }

  Prepared p{gt, pred, enumerate_subsets(cfg.scheme, shape), std::nullopt,
             cfg.variant == DiceVariant::Leaf};
  std::vector<unsigned char> excluded(shape.batch * shape.classes, 0);
  bool any_excluded = false;

  if (cfg.variant == DiceVariant::Marginal) {
    if (mask == nullptr) throw Error(ErrorCode::MaskRequired, "marginal variant needs an availability mask");
    if (!cfg.background_class) throw Error(ErrorCode::InvalidConfig, "marginal variant needs a background class");
    auto merged = marginal_merge(gt, pred, *mask, *cfg.background_class);
    for (std::size_t b = 0; b < shape.batch; ++b) {
      for (std::size_t c = 0; c < shape.classes; ++c) {
        if (merged.routing.removed[b][c]) {
          excluded[b * shape.classes + c] = 1;
          any_excluded = true;
        }
      }
    }
    p.gt = std::move(merged.gt);
    p.pred = std::move(merged.pred);
    p.routing = std::move(merged.routing);
  }
  if (cfg.ignored_class) {
    for (std::size_t b = 0; b < shape.batch; ++b) excluded[b * shape.classes + *cfg.ignored_class] = 1;
    any_excluded = true;
  }
  if (any_excluded) p.subsets = restrict_subsets(std::move(p.subsets), shape, excluded);
  if (p.leaf) p.subsets = leaf_filter(p.gt, p.subsets);
  if (p.subsets.empty() && !p.leaf) {
    throw Error(ErrorCode::EmptyPartition, "no subset left to reduce over");
  }
  return p;
}

DiceEvaluation evaluate(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                        const AvailabilityMask* mask, bool with_gradient) {
  Prepared p = prepare(gt, pred, cfg, mask);
  const Shape& shape = gt.shape();
  DiceEvaluation ev;
  ev.loss.effective_subset_count = p.subsets.size();
  ev.loss.per_subset.reserve(p.subsets.size());

  std::vector<double> grad;
  if (with_gradient) grad.assign(shape.size(), 0.0);

  if (p.subsets.empty()) {
    // Leaf variant with nothing labeled: a silent no-op step.
    ev.loss.value = 0.0;
    ev.gradient = BatchTensor::zeros(shape);
    return ev;
  }

  const double inv_count = 1.0 / static_cast<double>(p.subsets.size());
  const auto y = p.gt.values();
  double sdsc_sum = 0.0;
  for (const auto& s : p.subsets) {
    const SubsetStats st = subset_reduce(p.gt, p.pred, s);
    const double eps = subset_epsilon(cfg.epsilon, s);
    const double num = 2.0 * st.intersection + eps;
    const double den = st.gt_sum + st.pred_sum + eps;
    // Both maps empty with zero smoothing: DSC convention 1, flat gradient.
    const double sdsc = den > 0.0 ? num / den : 1.0;
    sdsc_sum += sdsc;
    ev.loss.per_subset.push_back({s.id, st, eps, sdsc});
    if (with_gradient && den > 0.0) {
      const double ratio = num / (den * den);
      const double g_fg = -(2.0 / den - ratio) * inv_count;
      const double g_bg = ratio * inv_count;
      for (const std::size_t k : s.members) grad[k] = y[k] != 0.0 ? g_fg : g_bg;
    }
  }
  ev.loss.value = 1.0 - sdsc_sum * inv_count;

  if (with_gradient && p.routing) {
    std::vector<double> routed(shape.size(), 0.0);
    for (std::size_t b = 0; b < shape.batch; ++b) {
      for (std::size_t c = 0; c < shape.classes; ++c) {
        const std::size_t src = p.routing->column[b][c];
        for (std::size_t i = 0; i < shape.voxels; ++i) {
          routed[shape.index(b, c, i)] = grad[shape.index(b, src, i)];
        }
      }
    }
    grad = std::move(routed);
  }
  if (with_gradient) ev.gradient = BatchTensor(shape, std::move(grad));
  return ev;
}

}  // namespace

std::string_view to_string(DiceVariant variant) {
  switch (variant) {
    case DiceVariant::Standard: return "Standard";
    case DiceVariant::Leaf: return "Leaf";
    case DiceVariant::Marginal: return "Marginal";
  }
  return "?";
}

DiceVariant parse_variant(std::string_view name) {
  if (name == "Standard") return DiceVariant::Standard;
  if (name == "Leaf") return DiceVariant::Leaf;
  if (name == "Marginal") return DiceVariant::Marginal;
  throw Error(ErrorCode::InvalidConfig, "unknown dice variant '" + std::string(name) + "'");
}

AvailabilityMask AvailabilityMask::from_rows(const std::vector<std::vector<bool>>& rows) {
  if (rows.empty()) return {};
  AvailabilityMask mask(rows.size(), rows.front().size());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b].size() != mask.classes()) {
      throw Error(ErrorCode::ShapeMismatch, "availability rows differ in length");
    }
    for (std::size_t c = 0; c < rows[b].size(); ++c) mask.set(b, c, rows[b][c]);
  }
  return mask;
}

bool AvailabilityMask::all_available() const noexcept {
  for (const auto bit : bits_) {
    if (bit == 0) return false;
  }
  return true;
}

void validate_epsilon(const Epsilon& epsilon, ReductionScheme scheme, std::size_t classes) {
  if (const auto* scalar = std::get_if<double>(&epsilon)) {
    if (!(*scalar >= 0.0) || !std::isfinite(*scalar)) {
      throw Error(ErrorCode::EpsilonShapeInvalid, "epsilon must be finite and non-negative");
    }
    return;
  }
  const auto& per_class = std::get<std::vector<double>>(epsilon);
  if (!is_class_pure(scheme)) {
    throw Error(ErrorCode::EpsilonShapeInvalid,
                "per-class epsilon requires a class-pure scheme (ImageWise or BatchWise)");
  }
  if (per_class.size() != classes) {
    throw Error(ErrorCode::EpsilonShapeInvalid, "per-class epsilon needs " + std::to_string(classes) +
                                                    " entries, got " + std::to_string(per_class.size()));
  }
  for (const double e : per_class) {
    if (!(e >= 0.0) || !std::isfinite(e)) {
      throw Error(ErrorCode::EpsilonShapeInvalid, "epsilon entries must be finite and non-negative");
    }
  }
}

double subset_epsilon(const Epsilon& epsilon, const SubsetSpec& subset) {
  if (const auto* scalar = std::get_if<double>(&epsilon)) return *scalar;
  if (!subset.class_tag) throw Error(ErrorCode::EpsilonShapeInvalid, "subset spans several classes");
  return std::get<std::vector<double>>(epsilon).at(*subset.class_tag);
}

LossOutput dice_forward(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                        const AvailabilityMask* mask) {
  return evaluate(gt, pred, cfg, mask, false).loss;
}

BatchTensor dice_backward(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                          const AvailabilityMask* mask) {
  return evaluate(gt, pred, cfg, mask, true).gradient;
}

DiceEvaluation dice_evaluate(const BatchTensor& gt, const BatchTensor& pred, const DiceLossConfig& cfg,
                             const AvailabilityMask* mask) {
  return evaluate(gt, pred, cfg, mask, true);
}

MarginalMerge marginal_merge(const BatchTensor& gt, const BatchTensor& pred, const AvailabilityMask& mask,
                             std::size_t background_class) {
  if (gt.shape() != pred.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "ground truth and prediction shapes differ");
  }
  const Shape& shape = gt.shape();
  if (shape.classes < 2) {
    throw Error(ErrorCode::InvalidConfig, "marginal merging needs a softmax-style multiclass output");
  }
  if (background_class >= shape.classes) throw Error(ErrorCode::InvalidConfig, "background class out of range");
  if (mask.batch() != shape.batch || mask.classes() != shape.classes) {
    throw Error(ErrorCode::ShapeMismatch, "availability mask shape does not match (B, C)");
  }

  for (std::size_t b = 0; b < shape.batch; ++b) {
    if (!mask.available(b, background_class)) {
      throw Error(ErrorCode::InvalidConfig, "background must be available in every batch element");
    }
    for (std::size_t i = 0; i < shape.voxels; ++i) {
      double total = 0.0;
      for (std::size_t c = 0; c < shape.classes; ++c) total += pred.at(b, c, i);
      if (std::abs(total - 1.0) > kDistributionTol) {
        throw Error(ErrorCode::NotADistribution, "class probabilities at (b=" + std::to_string(b) +
                                                     ", i=" + std::to_string(i) + ") sum to " +
                                                     std::to_string(total));
      }
    }
  }

  auto y = gt.to_vector();
  auto p = pred.to_vector();
  ClassRouting routing;
  routing.column.assign(shape.batch, std::vector<std::size_t>(shape.classes));
  routing.removed.assign(shape.batch, std::vector<bool>(shape.classes, false));
  for (std::size_t b = 0; b < shape.batch; ++b) {
    for (std::size_t c = 0; c < shape.classes; ++c) {
      routing.column[b][c] = c;
      if (mask.available(b, c)) continue;
      routing.column[b][c] = background_class;
      routing.removed[b][c] = true;
      for (std::size_t i = 0; i < shape.voxels; ++i) {
        const std::size_t k = shape.index(b, c, i);
        const std::size_t bg = shape.index(b, background_class, i);
        if (y[k] != 0.0) {
          throw Error(ErrorCode::MissingLabelNotEmpty,
                      "unavailable class " + std::to_string(c) + " has labeled voxels in batch element " +
                          std::to_string(b));
        }
        p[bg] += p[k];
        p[k] = 0.0;
      }
    }
  }
  return {BatchTensor(shape, std::move(y)), BatchTensor(shape, std::move(p)), std::move(routing)};
}

std::vector<SubsetSpec> leaf_filter(const BatchTensor& gt, const std::vector<SubsetSpec>& subsets) {
  std::vector<SubsetSpec> kept;
  const auto y = gt.values();
  for (const auto& s : subsets) {
    double total = 0.0;
    for (const std::size_t k : s.members) total += y[k];
    if (total > 0.0) kept.push_back(s);
  }
  return kept;
}

}  // namespace dicegrad
