#pragma once

#include "json.hpp"
#include "rtnet/model.hpp"

namespace rtnet::model {

nlohmann::json to_json(const ModelConfig& cfg);

/// Strict: unknown keys raise ConfigError. Missing keys keep `base` values.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

}  // namespace rtnet::model
