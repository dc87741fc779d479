#pragma once

// Internal JSON bindings shared by the dataset manifest and the experiment config.

#include <nlohmann/json.hpp>

#include "dicegrad/synth.hpp"

namespace dicegrad {

nlohmann::json params_to_json(const GeneratorParams& p);
GeneratorParams params_from_json(const nlohmann::json& j);

}  // namespace dicegrad
