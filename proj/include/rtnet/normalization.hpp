#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rtnet/tensor.hpp"

namespace rtnet::norm {

enum class NormKind { WN, BN, LN, None };

std::string to_string(NormKind kind);
NormKind parse_norm_kind(std::string_view name);

/// Per-channel batch statistics. For an input (B, C, ...) channel c is
/// normalized over the batch axis and all trailing axes.
struct BatchNormParams {
  Tensor gamma;  // (C)
  Tensor beta;   // (C)
  double eps = 1e-5;
  double momentum = 0.1;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormParams create(std::size_t channels);
};

/// Training mode normalizes with batch statistics and updates the running
/// ones; eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, BatchNormParams& params, bool training);

/// Per-instance statistics over every non-batch axis, with a per-channel
/// (axis 1) gain and bias.
struct LayerNormParams {
  Tensor gain;  // (C)
  Tensor bias;  // (C)
  double eps = 1e-5;

  static LayerNormParams create(std::size_t channels);
};

/// With groups > 1 the channel axis is split into equal contiguous blocks and
/// each (instance, block) pair is normalized on its own, so grouped networks
/// keep their blocks independent.
Tensor layer_norm(const Tensor& x, const LayerNormParams& params, std::size_t groups = 1);

/// w = g * v / ||v|| with one (v, g) pair per output channel (axis 0).
struct WeightNormParam {
  Tensor v;
  Tensor g;

  /// Starts at the plain parameterization: v = weight, g = ||weight|| per row.
  static WeightNormParam from_weight(const Tensor& weight);
};

Tensor weight_norm_effective(const WeightNormParam& p);

}  // namespace rtnet::norm
