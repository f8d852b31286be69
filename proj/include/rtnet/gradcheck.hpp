#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rtnet/tensor.hpp"

namespace rtnet {

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominator floor: error = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  // Coordinates probed per tensor; 0 probes all of them.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 1;
  // A probe whose forward and backward one-sided differences disagree by
  // more than this (relative) straddles a ReLU or max-pool kink; such
  // coordinates are counted and skipped, since no derivative exists there.
  // The test uses forward evaluations only, never the analytic gradient.
  double kink_tolerance = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]" of the worst coordinate
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;
};

/// Compares reverse-mode gradients of <f(), R> against central differences,
/// where R is a fixed random projection of f's output. `f` must be a pure
/// function of the current values in `wrt` (reset any RNG it uses).
GradCheckResult check_gradients(const std::function<Tensor()>& f, const ParamList& wrt,
                                const GradCheckOptions& options = {});

}  // namespace rtnet
