#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "rtnet/error.hpp"
#include "rtnet/model.hpp"
#include "rtnet/model_json.hpp"

namespace rtnet::model {

namespace {

constexpr const char* kMagic = "RTNET1";

}

void save_checkpoint(const std::string& path, RTNet& model) {
  nlohmann::json j;
  j["magic"] = kMagic;
  j["config"] = to_json(model.config());
  j["backbone_frozen"] = model.backbone_frozen();
  nlohmann::json params = nlohmann::json::object();
  for (auto& p : model.parameters())
    params[p.name] = std::vector<double>(p.tensor.data().begin(), p.tensor.data().end());
  j["parameters"] = params;
  nlohmann::json buffers = nlohmann::json::object();
  for (auto& b : model.buffers()) buffers[b.name] = *b.values;
  j["buffers"] = buffers;
  if (model.relation()) {
    const auto& r = *model.relation();
    j["relation"] = {{"n", r.n}, {"raw", r.raw}, {"processed", r.processed}, {"theta_degrees", r.theta_degrees}};
  }
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out << j.dump();
    if (!out) throw DataError("failed while writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

RTNet load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("magic", "") != kMagic) throw DataError("checkpoint " + path + " lacks magic RTNET1");
  try {
    RTNet model(model_config_from_json(j.at("config")), 0);
    const auto& params = j.at("parameters");
    for (auto& p : model.parameters()) {
      if (!params.contains(p.name)) throw DataError("checkpoint misses parameter " + p.name);
      auto values = params.at(p.name).get<std::vector<double>>();
      if (values.size() != p.tensor.numel()) throw DataError("checkpoint parameter " + p.name + " has wrong size");
      std::copy(values.begin(), values.end(), p.tensor.data().begin());
    }
    if (params.size() != model.parameters().size()) throw DataError("checkpoint carries unknown parameters");
    const auto& buffers = j.at("buffers");
    for (auto& b : model.buffers()) {
      auto values = buffers.at(b.name).get<std::vector<double>>();
      if (values.size() != b.values->size()) throw DataError("checkpoint buffer " + b.name + " has wrong size");
      *b.values = std::move(values);
    }
    if (j.contains("relation")) {
      relation::RelationMatrix r;
      const auto& jr = j.at("relation");
      r.n = jr.at("n").get<std::size_t>();
      r.raw = jr.at("raw").get<std::vector<double>>();
      r.processed = jr.at("processed").get<std::vector<double>>();
      r.theta_degrees = jr.at("theta_degrees").get<double>();
      r.column_normalized = true;
      model.set_relation(std::move(r));
    }
    if (j.value("backbone_frozen", false)) model.freeze_backbone();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " is malformed: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path + " has an invalid config: " + e.what());
  }
}

}  // namespace rtnet::model
