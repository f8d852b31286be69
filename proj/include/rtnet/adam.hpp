#pragma once

#include <cstdint>
#include <vector>

#include "rtnet/tensor.hpp"

namespace rtnet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  AdamOptions options;
};

/// One bias-corrected Adam update over `params` using their gradients.
/// Throws NumericalError naming the first parameter with a non-finite
/// gradient; in that case nothing is modified.
void adam_step(ParamList& params, AdamState& state);

/// Owns the parameter list and its moment buffers.
class Adam {
 public:
  Adam(ParamList params, AdamOptions options);

  void zero_grad();
  void step() { adam_step(params_, state_); }

  const AdamState& state() const { return state_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamState state_;
};

}  // namespace rtnet
