#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dicegrad {

// Extent of the domain batch x class x voxel.
struct Shape {
  std::size_t batch = 0;
  std::size_t classes = 0;
  std::size_t voxels = 0;

  std::size_t size() const noexcept { return batch * classes * voxels; }
  // Row-major flat index: b outermost, i innermost.
  std::size_t index(std::size_t b, std::size_t c, std::size_t i) const noexcept {
    return (b * classes + c) * voxels + i;
  }
  bool operator==(const Shape&) const = default;
};

// Throws InvalidShape when any extent is zero or the product overflows.
void validate_shape(const Shape& shape);

enum class Role { GroundTruth, Prediction };

// Dense immutable tensor over (b, c, i) in double precision.
class BatchTensor {
 public:
  BatchTensor() = default;
  // Checks extent and length only; role constraints are enforced by make_batch.
  BatchTensor(Shape shape, std::vector<double> values);

  static BatchTensor zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> values() const noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator[](std::size_t flat) const noexcept { return data_[flat]; }
  double at(std::size_t b, std::size_t c, std::size_t i) const noexcept {
    return data_[shape_.index(b, c, i)];
  }

  // Mutation happens on a copy of the payload.
  std::vector<double> to_vector() const { return data_; }

  bool operator==(const BatchTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> data_;
};

BatchTensor make_batch(const Shape& shape, std::vector<double> values, Role role);

// Throws RangeViolation if the tensor does not satisfy the role's value domain.
void validate_role(const BatchTensor& tensor, Role role);

enum class ReductionScheme { ImageWise, ClassWise, BatchWise, AllWise };

std::string_view to_string(ReductionScheme scheme);
ReductionScheme parse_scheme(std::string_view name);

// True when every subset of the scheme covers exactly one class.
bool is_class_pure(ReductionScheme scheme) noexcept;

struct SubsetSpec {
  std::size_t id = 0;
  std::vector<std::size_t> members;  // flat indices, ascending
  std::optional<std::size_t> class_tag;
  std::optional<std::size_t> batch_tag;
};

struct SubsetStats {
  double intersection = 0.0;
  double gt_sum = 0.0;
  double pred_sum = 0.0;
};

// Subsets in deterministic order: ImageWise by (b, c), ClassWise by b, BatchWise by c.
std::vector<SubsetSpec> enumerate_subsets(ReductionScheme scheme, const Shape& shape);

// Sums over the members in listed order.
SubsetStats subset_reduce(const BatchTensor& gt, const BatchTensor& pred, const SubsetSpec& subset);

// Copy of `tensor` restricted to the listed classes, in the given order.
BatchTensor select_classes(const BatchTensor& tensor, std::span<const std::size_t> classes);

// Stacks B=1... tensors along the batch axis. All inputs must share classes and voxels.
BatchTensor stack_batch(std::span<const BatchTensor> parts);

}  // namespace dicegrad
