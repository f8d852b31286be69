#include "rtnet/normalization.hpp"

#include <cmath>

#include "rtnet/error.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/tape.hpp"

namespace rtnet::norm {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

bool wants_grad(const Impl& t) { return t && t->requires_grad && t->grad.size() == t->data.size(); }

struct Layout {
  std::size_t batch, channels, inner;
};

Layout layout_of(const Tensor& x, const Tensor& per_channel, const char* op) {
  if (x.rank() < 2) throw DimensionError(std::string(op) + ": input needs rank >= 2, got " + shape_str(x.shape()));
  Layout l{x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
  if (per_channel.rank() != 1 || per_channel.dim(0) != l.channels)
    throw DimensionError(std::string(op) + ": affine parameters must have shape (" + std::to_string(l.channels) + ")");
  return l;
}

}  // namespace

std::string to_string(NormKind kind) {
  switch (kind) {
    case NormKind::WN: return "WN";
    case NormKind::BN: return "BN";
    case NormKind::LN: return "LN";
    case NormKind::None: return "None";
  }
  return "?";
}

NormKind parse_norm_kind(std::string_view name) {
  if (name == "WN") return NormKind::WN;
  if (name == "BN") return NormKind::BN;
  if (name == "LN") return NormKind::LN;
  if (name == "None") return NormKind::None;
  throw ConfigError("unknown normalization kind '" + std::string(name) + "' (expected WN, BN, LN or None)");
}

BatchNormParams BatchNormParams::create(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Tensor::full({channels}, 1.0, true);
  p.beta = Tensor::zeros({channels}, true);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  return p;
}

Tensor batch_norm(const Tensor& x, BatchNormParams& p, bool training) {
  const Layout l = layout_of(x, p.gamma, "batch_norm");
  if (p.running_mean.size() != l.channels || p.running_var.size() != l.channels)
    throw DimensionError("batch_norm: running statistics do not match channel count");
  if (training && l.batch < 2) throw ConfigError("batch_norm: training mode needs a batch of at least 2");
  const std::size_t n = l.batch * l.inner;
  std::vector<double> mu(l.channels), inv_std(l.channels);
  const double* xd = x.data().data();
  auto at = [&](std::size_t b, std::size_t c) { return (b * l.channels + c) * l.inner; };

  if (training) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t i = 0; i < l.inner; ++i) s += xd[at(b, c) + i];
      const double m = s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t b = 0; b < l.batch; ++b)
        for (std::size_t i = 0; i < l.inner; ++i) {
          const double d = xd[at(b, c) + i] - m;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(n);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + p.eps);
      const double unbiased = n > 1 ? ss / static_cast<double>(n - 1) : var;
      p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * m;
      p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < l.channels; ++c) {
      mu[c] = p.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(p.running_var[c] + p.eps);
    }
  }

  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel());
  double* y = out.data().data();
  for (std::size_t b = 0; b < l.batch; ++b)
    for (std::size_t c = 0; c < l.channels; ++c) {
      const double gm = p.gamma.data()[c], bt = p.beta.data()[c];
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t k = at(b, c) + i;
        xhat[k] = (xd[k] - mu[c]) * inv_std[c];
        y[k] = gm * xhat[k] + bt;
      }
    }

  if (detail::should_record({&x, &p.gamma, &p.beta})) {
    Impl xi = x.impl_ptr(), gi = p.gamma.impl_ptr(), bi = p.beta.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {x, p.gamma, p.beta},
                      [xi, gi, bi, yi, l, n, training, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
                        auto at = [&](std::size_t b, std::size_t c) { return (b * l.channels + c) * l.inner; };
                        const double* dy = yi->grad.data();
                        for (std::size_t c = 0; c < l.channels; ++c) {
                          double sum_dy = 0.0, sum_dy_xhat = 0.0;
                          for (std::size_t b = 0; b < l.batch; ++b)
                            for (std::size_t i = 0; i < l.inner; ++i) {
                              const std::size_t k = at(b, c) + i;
                              sum_dy += dy[k];
                              sum_dy_xhat += dy[k] * xhat[k];
                            }
                          if (wants_grad(gi)) gi->grad[c] += sum_dy_xhat;
                          if (wants_grad(bi)) bi->grad[c] += sum_dy;
                          if (!wants_grad(xi)) continue;
                          const double gm = gi->data[c];
                          const double nn = static_cast<double>(n);
                          for (std::size_t b = 0; b < l.batch; ++b)
                            for (std::size_t i = 0; i < l.inner; ++i) {
                              const std::size_t k = at(b, c) + i;
                              if (training)
                                xi->grad[k] += gm * inv_std[c] * (dy[k] - sum_dy / nn - xhat[k] * sum_dy_xhat / nn);
                              else
                                xi->grad[k] += gm * inv_std[c] * dy[k];
                            }
                        }
                      });
  }
  return out;
}

LayerNormParams LayerNormParams::create(std::size_t channels) {
  LayerNormParams p;
  p.gain = Tensor::full({channels}, 1.0, true);
  p.bias = Tensor::zeros({channels}, true);
  return p;
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p, std::size_t groups) {
  const Layout l = layout_of(x, p.gain, "layer_norm");
  if (p.bias.rank() != 1 || p.bias.dim(0) != l.channels)
    throw DimensionError("layer_norm: bias must have shape (" + std::to_string(l.channels) + ")");
  if (groups == 0 || l.channels % groups != 0)
    throw ConfigError("layer_norm: " + std::to_string(groups) + " groups do not divide " +
                      std::to_string(l.channels) + " channels");
  // Statistics are taken over contiguous segments: one per (instance, group).
  const std::size_t seg = l.channels / groups * l.inner;
  const std::size_t segments = l.batch * groups;
  if (seg < 2) throw ConfigError("layer_norm: normalized axis must hold at least 2 values");
  auto channel_of = [l, groups, seg](std::size_t s, std::size_t o) { return ((s % groups) * seg + o) / l.inner; };
  const double* xd = x.data().data();
  Tensor out = Tensor::zeros(x.shape());
  double* y = out.data().data();
  std::vector<double> xhat(x.numel()), inv_std(segments);
  for (std::size_t s = 0; s < segments; ++s) {
    const double* xs = xd + s * seg;
    double sum = 0.0;
    for (std::size_t k = 0; k < seg; ++k) sum += xs[k];
    const double m = sum / static_cast<double>(seg);
    double ss = 0.0;
    for (std::size_t k = 0; k < seg; ++k) ss += (xs[k] - m) * (xs[k] - m);
    inv_std[s] = 1.0 / std::sqrt(ss / static_cast<double>(seg) + p.eps);
    for (std::size_t o = 0; o < seg; ++o) {
      const std::size_t k = s * seg + o, c = channel_of(s, o);
      xhat[k] = (xd[k] - m) * inv_std[s];
      y[k] = p.gain.data()[c] * xhat[k] + p.bias.data()[c];
    }
  }
  if (detail::should_record({&x, &p.gain, &p.bias})) {
    Impl xi = x.impl_ptr(), gi = p.gain.impl_ptr(), bi = p.bias.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {x, p.gain, p.bias},
                      [xi, gi, bi, yi, seg, segments, channel_of, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)]() {
                        const double* dy = yi->grad.data();
                        std::vector<double> dxhat(seg);
                        for (std::size_t s = 0; s < segments; ++s) {
                          double s1 = 0.0, s2 = 0.0;
                          for (std::size_t o = 0; o < seg; ++o) {
                            const std::size_t k = s * seg + o, c = channel_of(s, o);
                            if (wants_grad(gi)) gi->grad[c] += dy[k] * xhat[k];
                            if (wants_grad(bi)) bi->grad[c] += dy[k];
                            dxhat[o] = dy[k] * gi->data[c];
                            s1 += dxhat[o];
                            s2 += dxhat[o] * xhat[k];
                          }
                          if (!wants_grad(xi)) continue;
                          const double nn = static_cast<double>(seg);
                          for (std::size_t o = 0; o < seg; ++o)
                            xi->grad[s * seg + o] += inv_std[s] * (dxhat[o] - s1 / nn - xhat[s * seg + o] * s2 / nn);
                        }
                      });
  }
  return out;
}

WeightNormParam WeightNormParam::from_weight(const Tensor& weight) {
  WeightNormParam p;
  p.v = weight.detach();
  p.v.set_requires_grad(true);
  const std::size_t rows = weight.dim(0), width = weight.numel() / rows;
  p.g = Tensor::zeros({rows}, true);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t i = 0; i < width; ++i) ss += weight.data()[r * width + i] * weight.data()[r * width + i];
    p.g.data()[r] = std::sqrt(ss);
  }
  return p;
}

Tensor weight_norm_effective(const WeightNormParam& p) { return weight_norm(p.v, p.g); }

}  // namespace rtnet::norm
