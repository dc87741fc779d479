#include "dicegrad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "dicegrad/error.hpp"
#include "dicegrad/tensor_io.hpp"
#include "json_io.hpp"

namespace dicegrad {
namespace {

void check_range(const Range& r, const char* name, double lo, double hi) {
  if (!(r.lo >= lo && r.hi <= hi && r.lo <= r.hi)) {
    throw Error(ErrorCode::InvalidParams, std::string(name) + " range is invalid");
  }
}

double draw(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

struct Canvas {
  std::size_t n;
  std::vector<double> image;
  std::vector<std::size_t> label;  // 0 = background / no structure

  explicit Canvas(std::size_t size, double background)
      : n(size), image(size * size, background), label(size * size, 0) {}

  void disk(double cy, double cx, double radius, std::size_t cls, double intensity) {
    paint(cy, cx, -1.0, radius, cls, intensity);
  }

  // Pixels whose centre lies at distance in (inner, outer] from (cy, cx).
  void paint(double cy, double cx, double inner, double outer, std::size_t cls, double intensity) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) {
        const double dy = static_cast<double>(r) - cy;
        const double dx = static_cast<double>(c) - cx;
        const double d2 = dy * dy + dx * dx;
        if (d2 <= outer * outer && (inner < 0.0 || d2 > inner * inner)) {
          image[r * n + c] = intensity;
          label[r * n + c] = cls;
        }
      }
    }
  }

  void add_noise(std::mt19937_64& rng, double sigma) {
    if (sigma <= 0.0) return;
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : image) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
};

SyntheticSample binary_sample(const GeneratorParams& p, std::mt19937_64& rng, SampleTag tag, std::uint64_t id) {
  const bool grade_a = tag == SampleTag::GradeA;
  const double radius = draw(rng, grade_a ? p.binary.radius_a : p.binary.radius_b);
  const double intensity = draw(rng, grade_a ? p.binary.intensity_a : p.binary.intensity_b);
  const double n = static_cast<double>(p.image_size);
  const Range centre{radius + 1.0, n - radius - 2.0};
  const double cy = draw(rng, centre);
  const double cx = draw(rng, centre);

  Canvas canvas(p.image_size, p.background);
  canvas.disk(cy, cx, radius, 1, intensity);
  canvas.add_noise(rng, p.noise_sigma);

  std::vector<double> gt(canvas.label.size());
  std::transform(canvas.label.begin(), canvas.label.end(), gt.begin(),
                 [](std::size_t l) { return l == 1 ? 1.0 : 0.0; });
  const std::size_t voxels = gt.size();
  return {Image{p.image_size, std::move(canvas.image)}, BatchTensor({1, 1, voxels}, std::move(gt)), tag, {true}, id};
}

SyntheticSample cardiac_sample(const GeneratorParams& p, std::mt19937_64& rng, SampleTag tag, std::uint64_t id) {
  const auto& s = p.cardiac;
  const double scale = tag == SampleTag::PhaseES ? s.es_shrink : 1.0;
  const double lv = draw(rng, s.lv_radius) * scale;
  const double myo = lv + draw(rng, s.myo_thickness) * scale;
  const double rv = draw(rng, s.rv_radius) * scale;
  const double gap = 1.5;
  const double n = static_cast<double>(p.image_size);

  // LV/MYO complex on the left, RV to its right on a bearing within +-25 degrees.
  const double dist = myo + gap + rv;
  const double span = myo + gap + 2.0 * rv;
  const double cx = draw(rng, {myo + 1.0, std::max(myo + 1.0, n - span - 2.0)});
  double angle = draw(rng, {-0.436, 0.436});
  double lo = std::max(myo + 1.0, rv + 1.0 - dist * std::sin(angle));
  double hi = std::min(n - myo - 2.0, n - rv - 2.0 - dist * std::sin(angle));
  if (lo > hi) {
    angle = 0.0;
    lo = std::max(myo, rv) + 1.0;
    hi = n - std::max(myo, rv) - 2.0;
  }
  const double cy = draw(rng, {lo, hi});
  const double ry = cy + dist * std::sin(angle);
  const double rx = cx + dist * std::cos(angle);

  Canvas canvas(p.image_size, p.background);
  canvas.disk(ry, rx, rv, kRV, draw(rng, s.rv_intensity));
  canvas.paint(cy, cx, lv, myo, kMYO, draw(rng, s.myo_intensity));
  canvas.disk(cy, cx, lv, kLV, draw(rng, s.lv_intensity));
  canvas.add_noise(rng, p.noise_sigma);

  const std::size_t voxels = canvas.label.size();
  std::vector<double> gt(4 * voxels, 0.0);
  for (std::size_t i = 0; i < voxels; ++i) gt[canvas.label[i] * voxels + i] = 1.0;
  return {Image{p.image_size, std::move(canvas.image)},
          BatchTensor({1, 4, voxels}, std::move(gt)), tag, {true, true, true, true}, id};
}

template <typename MakeSample>
Dataset generate(Task task, const GeneratorParams& params, std::uint64_t seed, SampleTag tag_a, SampleTag tag_b,
                 MakeSample make) {
  validate_params(params, task);
  Dataset ds{task, params, {}};
  ds.params.seed = seed;
  std::mt19937_64 rng(seed);
  ds.samples.reserve(params.count_a + params.count_b);
  for (std::size_t k = 0; k < params.count_a + params.count_b; ++k) {
    ds.samples.push_back(make(params, rng, k < params.count_a ? tag_a : tag_b, k));
  }
  return ds;
}

std::string sample_file(std::size_t k) {
  std::ostringstream os;
  os << "sample_" << std::setw(4) << std::setfill('0') << k << ".drt";
  return os.str();
}

}  // namespace

std::string_view to_string(Task task) { return task == Task::Binary ? "binary" : "multiclass"; }

std::string_view to_string(SampleTag tag) {
  switch (tag) {
    case SampleTag::GradeA: return "GradeA";
    case SampleTag::GradeB: return "GradeB";
    case SampleTag::PhaseED: return "PhaseED";
    case SampleTag::PhaseES: return "PhaseES";
  }
  return "?";
}

Task parse_task(std::string_view name) {
  if (name == "binary") return Task::Binary;
  if (name == "multiclass") return Task::Multiclass;
  throw Error(ErrorCode::InvalidConfig, "unknown task '" + std::string(name) + "'");
}

SampleTag parse_tag(std::string_view name) {
  for (const auto tag : {SampleTag::GradeA, SampleTag::GradeB, SampleTag::PhaseED, SampleTag::PhaseES}) {
    if (name == to_string(tag)) return tag;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown sample tag '" + std::string(name) + "'");
}

std::string_view to_string(PartialAction action) {
  return action == PartialAction::EmptyMap ? "EmptyMap" : "MarkUnavailable";
}

PartialAction parse_action(std::string_view name) {
  if (name == "EmptyMap") return PartialAction::EmptyMap;
  if (name == "MarkUnavailable") return PartialAction::MarkUnavailable;
  throw Error(ErrorCode::InvalidConfig, "unknown partial action '" + std::string(name) + "'");
}

std::vector<std::string> class_names(Task task) {
  if (task == Task::Binary) return {"foreground"};
  return {"background", "LV", "MYO", "RV"};
}

void validate_params(const GeneratorParams& p, Task task) {
  if (p.image_size < 16) throw Error(ErrorCode::InvalidParams, "image_size must be at least 16");
  if (p.count_a < 1 || p.count_b < 1) throw Error(ErrorCode::InvalidParams, "sample counts must be >= 1");
  if (!(p.background >= 0.0 && p.background <= 1.0)) throw Error(ErrorCode::InvalidParams, "background outside [0,1]");
  if (!(p.noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidParams, "noise sigma must be non-negative");
  const double half = static_cast<double>(p.image_size) / 2.0 - 2.0;
  if (task == Task::Binary) {
    check_range(p.binary.intensity_a, "intensity_a", 0.0, 1.0);
    check_range(p.binary.intensity_b, "intensity_b", 0.0, 1.0);
    check_range(p.binary.radius_a, "radius_a", 0.5, half);
    check_range(p.binary.radius_b, "radius_b", 0.5, half);
  } else {
    const auto& s = p.cardiac;
    check_range(s.lv_intensity, "lv_intensity", 0.0, 1.0);
    check_range(s.myo_intensity, "myo_intensity", 0.0, 1.0);
    check_range(s.rv_intensity, "rv_intensity", 0.0, 1.0);
    check_range(s.lv_radius, "lv_radius", 0.5, half);
    check_range(s.myo_thickness, "myo_thickness", 0.5, half);
    check_range(s.rv_radius, "rv_radius", 0.5, half);
    if (!(s.es_shrink > 0.0 && s.es_shrink <= 1.0)) throw Error(ErrorCode::InvalidParams, "es_shrink outside (0,1]");
    const double width = s.lv_radius.hi + s.myo_thickness.hi + 1.5 + 2.0 * s.rv_radius.hi + s.lv_radius.hi +
                         s.myo_thickness.hi + 4.0;
    if (width > static_cast<double>(p.image_size)) {
      throw Error(ErrorCode::InvalidParams, "cardiac structures do not fit the image");
    }
  }
}

std::vector<BatchTensor> Dataset::gt_maps() const {
  std::vector<BatchTensor> maps;
  maps.reserve(samples.size());
  for (const auto& s : samples) maps.push_back(s.gt);
  return maps;
}

Dataset generate_binary(const GeneratorParams& params, std::uint64_t seed) {
  return generate(Task::Binary, params, seed, SampleTag::GradeA, SampleTag::GradeB, binary_sample);
}

Dataset generate_multiclass(const GeneratorParams& params, std::uint64_t seed) {
  return generate(Task::Multiclass, params, seed, SampleTag::PhaseED, SampleTag::PhaseES, cardiac_sample);
}

Dataset apply_partial(const Dataset& dataset, const PartialPolicy& policy) {
  const std::size_t classes = dataset.classes();
  const auto bg = dataset.background_class();
  if (policy.target_class && (*policy.target_class >= classes || policy.target_class == bg)) {
    throw Error(ErrorCode::TargetNotFound, "no foreground class " + std::to_string(*policy.target_class));
  }
  if (policy.target_tag) {
    const bool present = std::any_of(dataset.samples.begin(), dataset.samples.end(),
                                     [&](const SyntheticSample& s) { return s.tag == *policy.target_tag; });
    if (!present) {
      throw Error(ErrorCode::TargetNotFound, "no sample tagged " + std::string(to_string(*policy.target_tag)));
    }
  }

  Dataset out = dataset;
  for (auto& sample : out.samples) {
    if (policy.target_tag && sample.tag != *policy.target_tag) continue;
    const std::size_t voxels = sample.gt.shape().voxels;
    auto y = sample.gt.to_vector();
    for (std::size_t c = 0; c < classes; ++c) {
      if (bg && c == *bg) continue;
      if (policy.target_class && c != *policy.target_class) continue;
      for (std::size_t i = 0; i < voxels; ++i) {
        double& v = y[c * voxels + i];
        if (v != 0.0 && bg) y[*bg * voxels + i] = 1.0;
        v = 0.0;
      }
      if (policy.action == PartialAction::MarkUnavailable) sample.availability[c] = false;
    }
    sample.gt = BatchTensor(sample.gt.shape(), std::move(y));
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["task"] = std::string(to_string(dataset.task));
  manifest["classes"] = class_names(dataset.task);
  manifest["params"] = params_to_json(dataset.params);
  manifest["layout"] = "channel 0 image, channels 1..C ground truth";
  auto& list = manifest["samples"] = nlohmann::json::array();
  for (std::size_t k = 0; k < dataset.samples.size(); ++k) {
    const auto& s = dataset.samples[k];
    const std::size_t voxels = s.gt.shape().voxels;
    const std::size_t classes = s.gt.shape().classes;
    std::vector<double> packed(s.image.pixels);
    packed.insert(packed.end(), s.gt.values().begin(), s.gt.values().end());
    const std::string file = sample_file(k);
    write_tensor(dir / file, BatchTensor({1, classes + 1, voxels}, std::move(packed)));
    list.push_back({{"subject_id", s.subject_id},
                    {"tag", std::string(to_string(s.tag))},
                    {"availability", s.availability},
                    {"file", file}});
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("manifest: ") + e.what());
  }
  Dataset ds;
  try {
    ds.task = parse_task(manifest.at("task").get<std::string>());
    ds.params = params_from_json(manifest.at("params"));
    for (const auto& entry : manifest.at("samples")) {
      const BatchTensor packed = read_tensor(dir / entry.at("file").get<std::string>());
      const auto& shape = packed.shape();
      if (shape.batch != 1 || shape.classes != ds.classes() + 1) {
        throw Error(ErrorCode::FormatError, "sample tensor has unexpected shape");
      }
      const auto values = packed.values();
      const std::size_t n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(shape.voxels))));
      if (n * n != shape.voxels) throw Error(ErrorCode::FormatError, "sample image is not square");
      SyntheticSample s;
      s.image = Image{n, std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n * n))};
      s.gt = make_batch({1, ds.classes(), shape.voxels},
                        std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(n * n), values.end()),
                        Role::GroundTruth);
      s.tag = parse_tag(entry.at("tag").get<std::string>());
      s.availability = entry.at("availability").get<std::vector<bool>>();
      s.subject_id = entry.at("subject_id").get<std::uint64_t>();
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("manifest: ") + e.what());
  }
  if (ds.samples.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no samples");
  return ds;
}

}  // namespace dicegrad
