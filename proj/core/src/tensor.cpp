#include "dicegrad/tensor.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dicegrad/error.hpp"

namespace dicegrad {

void validate_shape(const Shape& shape) {
  if (shape.batch == 0 || shape.classes == 0 || shape.voxels == 0) {
    throw Error(ErrorCode::InvalidShape, "all extents must be positive");
  }
  constexpr auto kMax = std::numeric_limits<std::size_t>::max() / sizeof(double);
  if (shape.batch > kMax / shape.classes || shape.batch * shape.classes > kMax / shape.voxels) {
    throw Error(ErrorCode::InvalidShape, "tensor size overflows");
  }
}

BatchTensor::BatchTensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  validate_shape(shape_);
  if (data_.size() != shape_.size()) {
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(shape_.size()) +
                                               " values, got " + std::to_string(data_.size()));
  }
}

BatchTensor BatchTensor::zeros(Shape shape) {
  validate_shape(shape);
  return BatchTensor(shape, std::vector<double>(shape.size(), 0.0));
}

void validate_role(const BatchTensor& tensor, Role role) {
  const auto values = tensor.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = values[k];
    const bool ok = role == Role::GroundTruth ? (v == 0.0 || v == 1.0)
                                              : (std::isfinite(v) && v >= 0.0 && v <= 1.0);
    if (!ok) {
      throw Error(ErrorCode::RangeViolation,
                  std::string(role == Role::GroundTruth ? "ground truth must be binary"
                                                        : "prediction must lie in [0,1]") +
                      " (index " + std::to_string(k) + ", value " + std::to_string(v) + ")");
    }
  }
}

BatchTensor make_batch(const Shape& shape, std::vector<double> values, Role role) {
  BatchTensor tensor(shape, std::move(values));
  validate_role(tensor, role);
  return tensor;
}

std::string_view to_string(ReductionScheme scheme) {
  switch (scheme) {
    case ReductionScheme::ImageWise: return "ImageWise";
    case ReductionScheme::ClassWise: return "ClassWise";
    case ReductionScheme::BatchWise: return "BatchWise";
    case ReductionScheme::AllWise: return "AllWise";
  }
  return "?";
}

ReductionScheme parse_scheme(std::string_view name) {
  if (name == "ImageWise" || name == "I") return ReductionScheme::ImageWise;
  if (name == "ClassWise" || name == "CI") return ReductionScheme::ClassWise;
  if (name == "BatchWise" || name == "BI") return ReductionScheme::BatchWise;
  if (name == "AllWise" || name == "BCI") return ReductionScheme::AllWise;
  throw Error(ErrorCode::InvalidConfig, "unknown reduction scheme '" + std::string(name) + "'");
}

bool is_class_pure(ReductionScheme scheme) noexcept {
  return scheme == ReductionScheme::ImageWise || scheme == ReductionScheme::BatchWise;
}

std::vector<SubsetSpec> enumerate_subsets(ReductionScheme scheme, const Shape& shape) {
  validate_shape(shape);
  const auto [B, C, I] = shape;
  std::vector<SubsetSpec> out;
  switch (scheme) {
    case ReductionScheme::ImageWise:
      out.reserve(B * C);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
          SubsetSpec s{out.size(), {}, c, b};
          s.members.reserve(I);
          for (std::size_t i = 0; i < I; ++i) s.members.push_back(shape.index(b, c, i));
          out.push_back(std::move(s));
        }
      }
      break;
    case ReductionScheme::ClassWise:
      out.reserve(B);
      for (std::size_t b = 0; b < B; ++b) {
        SubsetSpec s{out.size(), {}, C == 1 ? std::optional<std::size_t>(0) : std::nullopt, b};
        s.members.reserve(C * I);
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t i = 0; i < I; ++i) s.members.push_back(shape.index(b, c, i));
        }
        out.push_back(std::move(s));
      }
      break;
    case ReductionScheme::BatchWise:
      out.reserve(C);
      for (std::size_t c = 0; c < C; ++c) {
        SubsetSpec s{out.size(), {}, c, B == 1 ? std::optional<std::size_t>(0) : std::nullopt};
        s.members.reserve(B * I);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t i = 0; i < I; ++i) s.members.push_back(shape.index(b, c, i));
        }
        out.push_back(std::move(s));
      }
      break;
    case ReductionScheme::AllWise: {
      SubsetSpec s{0, {}, C == 1 ? std::optional<std::size_t>(0) : std::nullopt,
                   B == 1 ? std::optional<std::size_t>(0) : std::nullopt};
      s.members.resize(shape.size());
      for (std::size_t k = 0; k < s.members.size(); ++k) s.members[k] = k;
      out.push_back(std::move(s));
      break;
    }
  }
  return out;
}

SubsetStats subset_reduce(const BatchTensor& gt, const BatchTensor& pred, const SubsetSpec& subset) {
  if (gt.shape() != pred.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "ground truth and prediction shapes differ");
  }
  const auto y = gt.values();
  const auto p = pred.values();
  SubsetStats stats;
  for (const std::size_t k : subset.members) {
    if (k >= y.size()) throw Error(ErrorCode::ShapeMismatch, "subset member out of range");
    stats.intersection += y[k] * p[k];
    stats.gt_sum += y[k];
    stats.pred_sum += p[k];
  }
  return stats;
}

BatchTensor select_classes(const BatchTensor& tensor, std::span<const std::size_t> classes) {
  const auto& s = tensor.shape();
  std::vector<double> out;
  out.reserve(s.batch * classes.size() * s.voxels);
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (const std::size_t c : classes) {
      if (c >= s.classes) throw Error(ErrorCode::ShapeMismatch, "class index out of range");
      const auto begin = tensor.values().begin() + static_cast<std::ptrdiff_t>(s.index(b, c, 0));
      out.insert(out.end(), begin, begin + static_cast<std::ptrdiff_t>(s.voxels));
    }
  }
  return BatchTensor({s.batch, classes.size(), s.voxels}, std::move(out));
}

BatchTensor stack_batch(std::span<const BatchTensor> parts) {
  if (parts.empty()) throw Error(ErrorCode::InvalidShape, "cannot stack zero tensors");
  const auto& first = parts.front().shape();
  Shape shape{0, first.classes, first.voxels};
  std::vector<double> out;
  for (const auto& t : parts) {
    if (t.shape().classes != first.classes || t.shape().voxels != first.voxels) {
      throw Error(ErrorCode::ShapeMismatch, "stacked tensors must share classes and voxels");
    }
    shape.batch += t.shape().batch;
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
  return BatchTensor(shape, std::move(out));
}

}  // namespace dicegrad
