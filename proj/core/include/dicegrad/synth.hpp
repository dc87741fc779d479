#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dicegrad/tensor.hpp"

namespace dicegrad {

enum class Task { Binary, Multiclass };
// GradeA/GradeB tag the binary task, PhaseED/PhaseES the multiclass one.
enum class SampleTag { GradeA, GradeB, PhaseED, PhaseES };

std::string_view to_string(Task task);
std::string_view to_string(SampleTag tag);
Task parse_task(std::string_view name);
SampleTag parse_tag(std::string_view name);

// Square grayscale image, row-major.
struct Image {
  std::size_t size = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const { return pixels[row * size + col]; }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Range&) const = default;
};

struct BinaryShapes {
  Range intensity_a{0.8, 0.95};
  Range intensity_b{0.55, 0.65};
  Range radius_a{4.5, 6.0};
  Range radius_b{3.5, 5.0};
  bool operator==(const BinaryShapes&) const = default;
};

// Inner disk (LV), ring around it (MYO), separate disk (RV).
struct CardiacShapes {
  Range lv_radius{4.0, 5.5};
  Range myo_thickness{2.0, 3.0};
  Range rv_radius{4.0, 5.5};
  Range lv_intensity{0.82, 0.9};
  Range myo_intensity{0.42, 0.5};
  Range rv_intensity{0.62, 0.7};
  double es_shrink = 0.8;
  bool operator==(const CardiacShapes&) const = default;
};

struct GeneratorParams {
  std::size_t image_size = 32;
  std::size_t count_a = 30;  // GradeA or PhaseED samples
  std::size_t count_b = 10;  // GradeB or PhaseES samples
  double background = 0.05;
  double noise_sigma = 0.04;
  BinaryShapes binary;
  CardiacShapes cardiac;
  std::uint64_t seed = 0;
  bool operator==(const GeneratorParams&) const = default;
};

// Throws InvalidParams.
void validate_params(const GeneratorParams& params, Task task);

struct SyntheticSample {
  Image image;
  BatchTensor gt;  // shape (1, C, N*N)
  SampleTag tag = SampleTag::GradeA;
  std::vector<bool> availability;  // per class
  std::uint64_t subject_id = 0;
};

struct Dataset {
  Task task = Task::Binary;
  GeneratorParams params;
  std::vector<SyntheticSample> samples;

  std::size_t classes() const noexcept { return task == Task::Binary ? 1 : 4; }
  // Index of the background map, absent for the binary task.
  std::optional<std::size_t> background_class() const noexcept {
    return task == Task::Binary ? std::nullopt : std::optional<std::size_t>(0);
  }
  std::vector<BatchTensor> gt_maps() const;
};

inline constexpr std::size_t kLV = 1;
inline constexpr std::size_t kMYO = 2;
inline constexpr std::size_t kRV = 3;

std::vector<std::string> class_names(Task task);

// One bright disk for GradeA, a dimmer smaller one for GradeB.
Dataset generate_binary(const GeneratorParams& params, std::uint64_t seed);
// Maps: background, LV, MYO, RV. PhaseES shrinks every radius by es_shrink.
Dataset generate_multiclass(const GeneratorParams& params, std::uint64_t seed);

enum class PartialAction {
  EmptyMap,         // GT zeroed, still marked available: the structure reads as absent
  MarkUnavailable,  // GT zeroed and flagged unavailable: the annotation is missing
};

std::string_view to_string(PartialAction action);
PartialAction parse_action(std::string_view name);

struct PartialPolicy {
  std::optional<std::size_t> target_class;  // default: every foreground class
  std::optional<SampleTag> target_tag;      // default: every sample
  PartialAction action = PartialAction::EmptyMap;
};

// Zeroed foreground moves to the background map when the task has one.
Dataset apply_partial(const Dataset& dataset, const PartialPolicy& policy);

// Directory layout: manifest.json plus one DRT1 file per sample holding
// (1, 1 + C, N*N): channel 0 is the image, channels 1..C the ground truth.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dicegrad
