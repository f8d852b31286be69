#include <cstring>

#include "rtnet/error.hpp"
#include "rtnet/model.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/tape.hpp"

namespace rtnet::model {

namespace {

LinearUnit make_fc(const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  return LinearUnit("head.fc", cfg.feature_size(), cfg.output_length * cfg.variates, cfg.groups, cfg.norm, rng);
}

void expect_shape(const Tensor& t, const Shape& want, const char* what) {
  if (!t.defined()) throw DimensionError(std::string(what) + " is missing");
  if (t.shape() != want)
    throw DimensionError(std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(t.shape()));
}

}  // namespace

RTNet::RTNet(ModelConfig cfg, std::uint64_t seed)
    : cfg_(cfg), fc_([&] {
        std::mt19937_64 head_rng(seed ^ 0x9e3779b97f4a7c15ULL);
        return make_fc(cfg, head_rng);
      }()) {
  std::mt19937_64 rng(seed);
  branches_.reserve(cfg_.blocks);
  for (std::size_t i = 1; i <= cfg_.blocks; ++i) branches_.emplace_back(i, cfg_, rng);
  if (cfg_.time_mode == TimeMode::Decoupled) {
    timenet_ = std::make_unique<TimeNet>(cfg_, rng);
    time_out_ = std::make_unique<ConvUnit>("time.out", 4 * cfg_.channels, cfg_.variates, 1, 1, 0, cfg_.groups,
                                           cfg_.norm, false, rng);
  }
}

void RTNet::set_relation(relation::RelationMatrix m) {
  if (m.n != cfg_.variates)
    throw DimensionError("relation matrix is " + std::to_string(m.n) + "x" + std::to_string(m.n) + ", model has N=" +
                         std::to_string(cfg_.variates));
  relation_ = std::move(m);
}

Tensor RTNet::embed_input(const ModelInput& in) const {
  if (!in.inputs.defined() || in.inputs.rank() != 3) throw DimensionError("model input must be (B, L_in, N)");
  const std::size_t B = in.inputs.dim(0);
  expect_shape(in.inputs, {B, cfg_.input_length, cfg_.variates}, "model input");
  Tensor x = in.inputs;
  if (cfg_.use_relation) {
    if (!relation_) throw ConfigError("model uses a relation matrix but none was set");
    x = relation::apply_relation(x, *relation_);
  }
  x = transpose12(x);
  if (cfg_.time_mode == TimeMode::Concat) {
    expect_shape(in.input_marks, {B, cfg_.input_length, cfg_.time_features}, "input-window time marks");
    const Tensor parts[] = {x, repeat_channels(transpose12(in.input_marks), cfg_.groups)};
    x = concat_grouped(parts, cfg_.groups);
  }
  return x;
}

CpnFeatures RTNet::cpn_forward(const Tensor& embedded, bool training, std::mt19937_64* rng) {
  CpnFeatures f;
  std::vector<Tensor> flat;
  for (auto& b : branches_) {
    Tensor h = b.forward(embedded, training, rng);
    f.branches.push_back(h);
    flat.push_back(reshape(h, {h.dim(0), h.dim(1) * h.dim(2)}));
  }
  f.concat = concat_grouped(flat, cfg_.groups);
  return f;
}

Tensor RTNet::head(const Tensor& features, const ModelInput& in, bool training, std::mt19937_64* rng) {
  const std::size_t B = features.dim(0);
  Tensor ar = reshape(fc_.forward(features), {B, cfg_.variates, cfg_.output_length});
  if (timenet_) {
    expect_shape(in.target_marks, {B, cfg_.output_length, cfg_.time_features}, "prediction-window time marks");
    Tensor t = time_out_->forward(timenet_->forward(in.target_marks, training, rng), training);
    ar = add(ar, t);
  }
  return transpose12(ar);
}

Tensor RTNet::representations(const ModelInput& in, bool training, std::mt19937_64* rng) {
  return cpn_forward(embed_input(in), training, rng).concat;
}

Tensor RTNet::forward(const ModelInput& in, bool training, std::mt19937_64* rng) {
  return head(representations(in, training, rng), in, training, rng);
}

Tensor RTNet::forward_contrastive(const ModelInput& in, bool training, std::mt19937_64* rng) {
  if (!frozen_) throw ContractError("contrastive head used before the backbone was frozen");
  Tensor features;
  {
    NoGradScope detached;
    features = representations(in, false, nullptr).detach();
  }
  return head(features, in, training, rng);
}

void RTNet::freeze_backbone() {
  for (auto& p : backbone_parameters()) p.tensor.set_requires_grad(false);
  frozen_ = true;
}

ParamList RTNet::backbone_parameters() {
  ParamList params;
  BufferList unused;
  for (auto& b : branches_) b.collect(params, unused);
  return params;
}

ParamList RTNet::head_parameters() {
  ParamList params;
  BufferList unused;
  fc_.collect(params);
  if (timenet_) {
    timenet_->collect(params, unused);
    time_out_->collect(params, unused);
  }
  return params;
}

ParamList RTNet::parameters() {
  ParamList all = backbone_parameters();
  for (auto& p : head_parameters()) all.push_back(p);
  return all;
}

BufferList RTNet::buffers() {
  ParamList unused;
  BufferList buffers;
  for (auto& b : branches_) b.collect(unused, buffers);
  if (timenet_) {
    timenet_->collect(unused, buffers);
    time_out_->collect(unused, buffers);
  }
  return buffers;
}

std::uint64_t RTNet::backbone_checksum() {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto& p : backbone_parameters())
    for (double v : p.tensor.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char c : bytes) h = (h ^ c) * 1099511628211ULL;
    }
  return h;
}

}  // namespace rtnet::model
