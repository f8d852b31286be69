#pragma once

#include <random>
#include <vector>

#include "rtnet/tensor.hpp"

namespace testutil {

inline rtnet::Tensor randn(rtnet::Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(rtnet::shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return rtnet::Tensor::from(std::move(shape), std::move(v), grad);
}

inline void fill_randn(rtnet::Tensor& t, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& x : t.data()) x = n(rng);
}

inline std::vector<double> values(const rtnet::Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace testutil
