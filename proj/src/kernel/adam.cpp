#include "rtnet/adam.hpp"

#include <cmath>
#include <string>

#include "rtnet/error.hpp"

namespace rtnet {

void adam_step(ParamList& params, AdamState& state) {
  auto& opt = state.options;
  if (!(opt.lr >= 0.0) || !(opt.beta1 > 0.0 && opt.beta1 < 1.0) || !(opt.beta2 > 0.0 && opt.beta2 < 1.0) ||
      !(opt.eps > 0.0))
    throw ConfigError("adam: invalid hyper-parameters");
  if (state.first_moment.size() != params.size()) {
    if (state.step != 0 || !state.first_moment.empty())
      throw DimensionError("adam: state tracks " + std::to_string(state.first_moment.size()) + " parameters, got " +
                           std::to_string(params.size()));
    for (auto& p : params) {
      state.first_moment.emplace_back(p.tensor.numel(), 0.0);
      state.second_moment.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].tensor.numel())
      throw DimensionError("adam: moment size mismatch for parameter " + params[i].name);
    for (double g : params[i].tensor.grad())
      if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient in parameter " + params[i].name);
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.data();
    auto g = params[i].tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * g[j];
      v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

Adam::Adam(ParamList params, AdamOptions options) : params_(std::move(params)) { state_.options = options; }

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace rtnet
