#include <cmath>

#include "rtnet/error.hpp"
#include "rtnet/model.hpp"
#include "rtnet/ops.hpp"

namespace rtnet::model {

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Tensor maybe_dropout(const Tensor& x, double rate, std::mt19937_64* rng, bool training) {
  if (!training || !rng || rate == 0.0) return x;
  return dropout(x, rate, *rng, true);
}

}  // namespace

ConvUnit::ConvUnit(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                   std::size_t padding, std::size_t groups, norm::NormKind kind, bool post_norm, std::mt19937_64& rng)
    : name_(std::move(name)), out_(out), stride_(stride), padding_(padding), groups_(groups), kind_(kind) {
  if (groups == 0 || in % groups != 0 || out % groups != 0)
    throw ConfigError(name_ + ": channels " + std::to_string(in) + "->" + std::to_string(out) +
                      " not divisible by groups " + std::to_string(groups));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in / groups * kernel));
  Tensor w = uniform({out, in / groups, kernel}, bound, rng);
  bias_ = uniform({out}, bound, rng);
  if (kind == norm::NormKind::WN)
    wn_ = norm::WeightNormParam::from_weight(w);
  else
    weight_ = w;
  if (post_norm && kind == norm::NormKind::BN) bn_ = norm::BatchNormParams::create(out);
  if (post_norm && kind == norm::NormKind::LN) ln_ = norm::LayerNormParams::create(out);
}

Tensor ConvUnit::effective_weight() const {
  return kind_ == norm::NormKind::WN ? norm::weight_norm_effective(wn_) : weight_;
}

Tensor ConvUnit::forward(const Tensor& x, bool training) {
  Tensor y = conv1d_grouped(x, effective_weight(), bias_, stride_, padding_, groups_);
  if (bn_) return norm::batch_norm(y, *bn_, training);
  if (ln_) return norm::layer_norm(y, *ln_, groups_);
  return y;
}

void ConvUnit::collect(ParamList& params, BufferList& buffers) {
  if (kind_ == norm::NormKind::WN) {
    params.push_back({name_ + ".v", wn_.v});
    params.push_back({name_ + ".g", wn_.g});
  } else {
    params.push_back({name_ + ".weight", weight_});
  }
  params.push_back({name_ + ".bias", bias_});
  if (bn_) {
    params.push_back({name_ + ".bn.gamma", bn_->gamma});
    params.push_back({name_ + ".bn.beta", bn_->beta});
    buffers.push_back({name_ + ".bn.running_mean", &bn_->running_mean});
    buffers.push_back({name_ + ".bn.running_var", &bn_->running_var});
  }
  if (ln_) {
    params.push_back({name_ + ".ln.gain", ln_->gain});
    params.push_back({name_ + ".ln.bias", ln_->bias});
  }
}

LinearUnit::LinearUnit(std::string name, std::size_t in, std::size_t out, std::size_t groups, norm::NormKind kind,
                       std::mt19937_64& rng)
    : name_(std::move(name)), groups_(groups), wn_on_(kind == norm::NormKind::WN) {
  if (groups == 0 || in % groups != 0 || out % groups != 0)
    throw ConfigError(name_ + ": features not divisible by groups");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in / groups));
  Tensor w = uniform({out, in / groups}, bound, rng);
  bias_ = uniform({out}, bound, rng);
  if (wn_on_)
    wn_ = norm::WeightNormParam::from_weight(w);
  else
    weight_ = w;
}

Tensor LinearUnit::forward(const Tensor& x) const {
  return linear_grouped(x, wn_on_ ? norm::weight_norm_effective(wn_) : weight_, bias_, groups_);
}

void LinearUnit::collect(ParamList& params) {
  if (wn_on_) {
    params.push_back({name_ + ".v", wn_.v});
    params.push_back({name_ + ".g", wn_.g});
  } else {
    params.push_back({name_ + ".weight", weight_});
  }
  params.push_back({name_ + ".bias", bias_});
}

RTBlock::RTBlock(std::string name, std::size_t channels, const ModelConfig& cfg, std::mt19937_64& rng)
    : channels_(channels),
      kernel_(cfg.kernel),
      groups_(cfg.groups),
      dropout_(cfg.dropout),
      conv1_(name + ".conv1", channels, 2 * channels, cfg.kernel, 2, cfg.kernel / 2, cfg.groups, cfg.norm, true, rng),
      conv2_(name + ".conv2", 2 * channels, 2 * channels, cfg.kernel, 1, cfg.kernel / 2, cfg.groups, cfg.norm, true,
             rng) {}

Tensor RTBlock::forward(const Tensor& x, bool training, std::mt19937_64* rng) {
  if (x.rank() != 3 || x.dim(1) != channels_)
    throw DimensionError("RTBlock expects (B, " + std::to_string(channels_) + ", L), got " + shape_str(x.shape()));
  if (x.dim(2) % 2 != 0) throw ConfigError("RTBlock needs an even length, got " + std::to_string(x.dim(2)));
  Tensor main = conv1_.forward(x, training);
  main = maybe_dropout(relu(main), dropout_, rng, training);
  main = conv2_.forward(main, training);
  Tensor shortcut = channel_upsample(maxpool1d(x, kernel_, 2, kernel_ / 2), 2, groups_);
  return maybe_dropout(relu(add(main, shortcut)), dropout_, rng, training);
}

void RTBlock::collect(ParamList& params, BufferList& buffers) {
  conv1_.collect(params, buffers);
  conv2_.collect(params, buffers);
}

TimeBlock::TimeBlock(std::string name, std::size_t channels, const ModelConfig& cfg, std::mt19937_64& rng)
    : groups_(cfg.groups),
      dropout_(cfg.dropout),
      conv1_(name + ".conv1", channels, 2 * channels, cfg.kernel, 1, cfg.kernel / 2, cfg.groups, cfg.norm, true, rng),
      conv2_(name + ".conv2", 2 * channels, 2 * channels, cfg.kernel, 1, cfg.kernel / 2, cfg.groups, cfg.norm, true,
             rng) {}

Tensor TimeBlock::forward(const Tensor& x, bool training, std::mt19937_64* rng) {
  Tensor main = maybe_dropout(relu(conv1_.forward(x, training)), dropout_, rng, training);
  main = conv2_.forward(main, training);
  return maybe_dropout(relu(add(main, channel_upsample(x, 2, groups_))), dropout_, rng, training);
}

void TimeBlock::collect(ParamList& params, BufferList& buffers) {
  conv1_.collect(params, buffers);
  conv2_.collect(params, buffers);
}

CpnBranch::CpnBranch(std::size_t index, const ModelConfig& cfg, std::mt19937_64& rng)
    : slice_(cfg.input_length >> (index - 1)),
      embed_("cpn." + std::to_string(index) + ".embed", cfg.input_channels(), cfg.channels, cfg.kernel, 1,
             cfg.kernel / 2, cfg.groups, cfg.norm, true, rng) {
  const std::size_t depth = cfg.blocks - index + 1;
  blocks_.reserve(depth);
  for (std::size_t j = 0; j < depth; ++j)
    blocks_.emplace_back("cpn." + std::to_string(index) + ".block" + std::to_string(j + 1), cfg.channels << j, cfg,
                         rng);
}

Tensor CpnBranch::forward(const Tensor& x, bool training, std::mt19937_64* rng) {
  Tensor h = embed_.forward(slice_last(x, slice_), training);
  for (auto& b : blocks_) h = b.forward(h, training, rng);
  return h;
}

void CpnBranch::collect(ParamList& params, BufferList& buffers) {
  embed_.collect(params, buffers);
  for (auto& b : blocks_) b.collect(params, buffers);
}

TimeNet::TimeNet(const ModelConfig& cfg, std::mt19937_64& rng)
    : groups_(cfg.groups),
      embed_("time.embed", cfg.groups * cfg.time_features, cfg.channels, cfg.kernel, 1, cfg.kernel / 2, cfg.groups,
             cfg.norm, true, rng),
      block1_("time.block1", cfg.channels, cfg, rng),
      block2_("time.block2", 2 * cfg.channels, cfg, rng) {}

Tensor TimeNet::forward(const Tensor& marks, bool training, std::mt19937_64* rng) {
  Tensor t = repeat_channels(transpose12(marks), groups_);
  t = embed_.forward(t, training);
  t = block1_.forward(t, training, rng);
  return block2_.forward(t, training, rng);
}

void TimeNet::collect(ParamList& params, BufferList& buffers) {
  embed_.collect(params, buffers);
  block1_.collect(params, buffers);
  block2_.collect(params, buffers);
}

}  // namespace rtnet::model
