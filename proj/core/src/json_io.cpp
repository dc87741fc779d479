#include "json_io.hpp"

#include "dicegrad/error.hpp"

namespace dicegrad {
namespace {

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j, const Range& fallback) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::InvalidConfig, "ranges are [lo, hi] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void read_into(const nlohmann::json& obj, const char* key, T& value) {
  if (obj.contains(key)) value = obj.at(key).get<T>();
}

void read_range(const nlohmann::json& obj, const char* key, Range& value) {
  if (obj.contains(key)) value = range_from(obj.at(key), value);
}

}  // namespace

nlohmann::json params_to_json(const GeneratorParams& p) {
  nlohmann::json j;
  j["image_size"] = p.image_size;
  j["count_a"] = p.count_a;
  j["count_b"] = p.count_b;
  j["background"] = p.background;
  j["noise_sigma"] = p.noise_sigma;
  j["seed"] = p.seed;
  j["binary"] = {{"intensity_a", range_json(p.binary.intensity_a)},
                 {"intensity_b", range_json(p.binary.intensity_b)},
                 {"radius_a", range_json(p.binary.radius_a)},
                 {"radius_b", range_json(p.binary.radius_b)}};
  j["cardiac"] = {{"lv_radius", range_json(p.cardiac.lv_radius)},
                  {"myo_thickness", range_json(p.cardiac.myo_thickness)},
                  {"rv_radius", range_json(p.cardiac.rv_radius)},
                  {"lv_intensity", range_json(p.cardiac.lv_intensity)},
                  {"myo_intensity", range_json(p.cardiac.myo_intensity)},
                  {"rv_intensity", range_json(p.cardiac.rv_intensity)},
                  {"es_shrink", p.cardiac.es_shrink}};
  return j;
}

GeneratorParams params_from_json(const nlohmann::json& j) {
  GeneratorParams p;
  if (j.is_null()) return p;
  try {
    read_into(j, "image_size", p.image_size);
    read_into(j, "count_a", p.count_a);
    read_into(j, "count_b", p.count_b);
    read_into(j, "background", p.background);
    read_into(j, "noise_sigma", p.noise_sigma);
    read_into(j, "seed", p.seed);
    if (j.contains("binary")) {
      const auto& b = j.at("binary");
      read_range(b, "intensity_a", p.binary.intensity_a);
      read_range(b, "intensity_b", p.binary.intensity_b);
      read_range(b, "radius_a", p.binary.radius_a);
      read_range(b, "radius_b", p.binary.radius_b);
    }
    if (j.contains("cardiac")) {
      const auto& c = j.at("cardiac");
      read_range(c, "lv_radius", p.cardiac.lv_radius);
      read_range(c, "myo_thickness", p.cardiac.myo_thickness);
      read_range(c, "rv_radius", p.cardiac.rv_radius);
      read_range(c, "lv_intensity", p.cardiac.lv_intensity);
      read_range(c, "myo_intensity", p.cardiac.myo_intensity);
      read_range(c, "rv_intensity", p.cardiac.rv_intensity);
      read_into(c, "es_shrink", p.cardiac.es_shrink);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("generator params: ") + e.what());
  }
  return p;
}

}  // namespace dicegrad
