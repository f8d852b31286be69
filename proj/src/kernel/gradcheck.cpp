#include "rtnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rtnet/tape.hpp"

namespace rtnet {

namespace {

double project(const Tensor& out, const std::vector<double>& r) {
  double s = 0.0;
  auto d = out.data();
  for (std::size_t i = 0; i < r.size(); ++i) s += d[i] * r[i];
  return s;
}

}  // namespace

GradCheckResult check_gradients(const std::function<Tensor()>& f, const ParamList& wrt,
                                const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (const auto& p : wrt) {
    p.tensor.impl()->requires_grad = true;
    p.tensor.impl()->grad.clear();
  }
  GradTape tape;
  Tensor out;
  {
    TapeScope scope(tape);
    out = f();
  }
  std::vector<double> r(out.numel());
  for (auto& v : r) v = normal(rng);
  const Tensor roots[] = {out};
  const std::vector<double> seeds[] = {r};
  tape.backward(roots, seeds);

  GradCheckResult result;
  NoGradScope no_grad;
  const double center = project(f(), r);
  for (const auto& p : wrt) {
    Tensor t = p.tensor;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
    }
    for (auto i : coords) {
      const double saved = t.data()[i];
      t.data()[i] = saved + options.eps;
      const double up = project(f(), r);
      t.data()[i] = saved - options.eps;
      const double down = project(f(), r);
      t.data()[i] = saved;
      const double forward = (up - center) / options.eps, backward = (center - down) / options.eps;
      if (std::abs(forward - backward) >
          options.kink_tolerance * std::max({std::abs(forward), std::abs(backward), options.floor})) {
        ++result.kinks_skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * options.eps);
      const double err =
          std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
      ++result.checked;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace rtnet
