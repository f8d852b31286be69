#pragma once

#include "json.hpp"
#include "rtnet/training.hpp"

namespace rtnet::training {

nlohmann::json to_json(const TrainConfig& cfg);
/// Strict: unknown keys throw ConfigError. Missing keys keep `base` values.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const History& history);

}  // namespace rtnet::training
