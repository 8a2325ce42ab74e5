// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "json.hpp"
#include "smc/trainer.hpp"

namespace smc {

nlohmann::json to_json(const TrainConfig& cfg);
/// Overlays the keys of `j` onto `base`. Unknown keys are a ParameterError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base);

/// Reads a JSON file. A top-level "profile" key selects the base profile
/// (default "desk"); all other keys override it.
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace smc
