#include <string>

#include "rtnet/error.hpp"
#include "rtnet/json_util.hpp"
#include "rtnet/model.hpp"
#include "rtnet/model_json.hpp"

namespace rtnet::model {

std::string to_string(TimeMode mode) {
  switch (mode) {
    case TimeMode::None: return "without";
    case TimeMode::Decoupled: return "w-o";
    case TimeMode::Concat: return "w-i";
  }
  return "?";
}

TimeMode parse_time_mode(std::string_view name) {
  if (name == "without" || name == "none") return TimeMode::None;
  if (name == "w-o") return TimeMode::Decoupled;
  if (name == "w-i") return TimeMode::Concat;
  throw ConfigError("unknown time mode '" + std::string(name) + "' (expected without, w-o or w-i)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (input_length == 0 || output_length == 0 || variates == 0 || channels == 0)
    fail("lengths, variates and channels must be positive");
  if (blocks == 0) fail("blocks must be at least 1");
  if (kernel == 0 || kernel % 2 == 0) fail("kernel must be odd, got " + std::to_string(kernel));
  if (groups != 1 && groups != variates) fail("groups must be 1 or N=" + std::to_string(variates));
  if (channels % groups != 0)
    fail("D=" + std::to_string(channels) + " not divisible by groups=" + std::to_string(groups));
  if (blocks >= 20 || input_length % (std::size_t{1} << blocks) != 0)
    fail("L_in=" + std::to_string(input_length) + " not divisible by 2^" + std::to_string(blocks));
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(theta_degrees >= 0.0 && theta_degrees <= 90.0)) fail("theta must lie in [0, 90]");
  if (time_mode != TimeMode::None && time_features == 0) fail("time mode " + to_string(time_mode) + " needs N_time >= 1");
  if (use_relation && groups != variates) fail("the relation matrix requires groups = N");
}

std::size_t ModelConfig::input_channels() const {
  return variates + (time_mode == TimeMode::Concat ? groups * time_features : 0);
}

std::size_t ModelConfig::feature_size() const {
  const std::size_t final_length = input_length >> blocks;
  std::size_t total = 0;
  for (std::size_t i = 1; i <= blocks; ++i) total += (channels << (blocks - i + 1)) * final_length;
  return total;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_length", c.input_length}, {"output_length", c.output_length}, {"variates", c.variates},
          {"time_features", c.time_features}, {"channels", c.channels},       {"blocks", c.blocks},
          {"groups", c.groups},               {"kernel", c.kernel},           {"use_relation", c.use_relation},
          {"theta_degrees", c.theta_degrees}, {"norm", norm::to_string(c.norm)}, {"dropout", c.dropout},
          {"time_mode", to_string(c.time_mode)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  StrictObject o(j, "model");
  o.optional("input_length", c.input_length);
  o.optional("output_length", c.output_length);
  o.optional("variates", c.variates);
  o.optional("time_features", c.time_features);
  o.optional("channels", c.channels);
  o.optional("blocks", c.blocks);
  o.optional("groups", c.groups);
  o.optional("kernel", c.kernel);
  o.optional("use_relation", c.use_relation);
  o.optional("theta_degrees", c.theta_degrees);
  o.optional("dropout", c.dropout);
  std::string s;
  if (o.has("norm")) {
    o.optional("norm", s);
    c.norm = norm::parse_norm_kind(s);
  }
  if (o.has("time_mode")) {
    o.optional("time_mode", s);
    c.time_mode = parse_time_mode(s);
  }
  o.finish();
  return c;
}

}  // namespace rtnet::model
