#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rtnet/error.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/simd/kernels.hpp"
#include "rtnet/tape.hpp"

namespace rtnet {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

bool wants_grad(const Impl& t) { return t && t->requires_grad && t->grad.size() == t->data.size(); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (!t.defined() || t.rank() != rank)
    throw DimensionError(std::string(what) + " must have rank " + std::to_string(rank) +
                         (t.defined() ? ", got " + shape_str(t.shape()) : std::string(", got undefined")));
}

struct ConvGeom {
  std::size_t batch, cin, len, cout, kernel, stride, padding, groups, cin_g, cout_g, lout;
};

// col[(c*k + t), l] = x[c, l*s + t - p] (zero outside).
void im2col(const double* x, const ConvGeom& g, double* col) {
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const double* xc = x + c * g.len;
    for (std::size_t t = 0; t < g.kernel; ++t) {
      double* row = col + (c * g.kernel + t) * g.lout;
      for (std::size_t l = 0; l < g.lout; ++l) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(l * g.stride + t) - static_cast<std::ptrdiff_t>(g.padding);
        row[l] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.len)) ? xc[pos] : 0.0;
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* dx) {
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    double* dxc = dx + c * g.len;
    for (std::size_t t = 0; t < g.kernel; ++t) {
      const double* row = col + (c * g.kernel + t) * g.lout;
      for (std::size_t l = 0; l < g.lout; ++l) {
        const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(l * g.stride + t) - static_cast<std::ptrdiff_t>(g.padding);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(g.len)) dxc[pos] += row[l];
      }
    }
  }
}

bool direct_layout(const ConvGeom& g) { return g.kernel == 1 && g.stride == 1 && g.padding == 0; }

}  // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (kernel == 0 || stride == 0) throw ConfigError("kernel and stride must be at least 1");
  if (length + 2 * padding < kernel)
    throw DimensionError("window of " + std::to_string(kernel) + " exceeds padded length " +
                         std::to_string(length + 2 * padding));
  return (length + 2 * padding - kernel) / stride + 1;
}

Tensor conv1d_grouped(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                      std::size_t padding, std::size_t groups) {
  require_rank(input, 3, "conv1d input");
  require_rank(weight, 3, "conv1d weight");
  if (groups == 0) throw ConfigError("conv1d: groups must be at least 1");
  ConvGeom g{};
  g.batch = input.dim(0);
  g.cin = input.dim(1);
  g.len = input.dim(2);
  g.cout = weight.dim(0);
  g.kernel = weight.dim(2);
  g.stride = stride;
  g.padding = padding;
  g.groups = groups;
  if (g.cin % groups != 0 || g.cout % groups != 0)
    throw ConfigError("conv1d: groups=" + std::to_string(groups) + " must divide C_in=" + std::to_string(g.cin) +
                      " and C_out=" + std::to_string(g.cout));
  g.cin_g = g.cin / groups;
  g.cout_g = g.cout / groups;
  if (weight.dim(1) != g.cin_g)
    throw DimensionError("conv1d weight " + shape_str(weight.shape()) + " expects C_in/groups=" +
                         std::to_string(g.cin_g));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout))
    throw DimensionError("conv1d bias must have shape (" + std::to_string(g.cout) + ")");
  g.lout = conv_output_length(g.len, g.kernel, stride, padding);

  Tensor out = Tensor::zeros({g.batch, g.cout, g.lout});
  const auto& K = simd::active();
  const std::size_t ck = g.cin_g * g.kernel;
  std::vector<double> col(direct_layout(g) ? 0 : ck * g.lout);
  const double* x = input.data().data();
  const double* w = weight.data().data();
  double* y = out.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const double* xg = x + (b * g.cin + grp * g.cin_g) * g.len;
      double* yg = y + (b * g.cout + grp * g.cout_g) * g.lout;
      if (bias.defined()) {
        const double* bv = bias.data().data() + grp * g.cout_g;
        for (std::size_t o = 0; o < g.cout_g; ++o) std::fill_n(yg + o * g.lout, g.lout, bv[o]);
      }
      const double* src = xg;
      if (!direct_layout(g)) {
        im2col(xg, g, col.data());
        src = col.data();
      }
      K.gemm_nn(g.cout_g, g.lout, ck, w + grp * g.cout_g * ck, ck, src, g.lout, yg, g.lout);
    }
  }

  if (detail::should_record({&input, &weight, &bias})) {
    Impl xi = input.impl_ptr(), wi = weight.impl_ptr(), bi = bias.defined() ? bias.impl_ptr() : nullptr;
    Impl yi = out.impl_ptr();
    std::vector<Tensor> ins{input, weight};
    if (bias.defined()) ins.push_back(bias);
    detail::record_op(out, std::move(ins), [xi, wi, bi, yi, g]() {
      const auto& K = simd::active();
      const std::size_t ck = g.cin_g * g.kernel;
      std::vector<double> col(direct_layout(g) ? 0 : ck * g.lout);
      std::vector<double> dcol(ck * g.lout);
      const double* dy = yi->grad.data();
      for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t grp = 0; grp < g.groups; ++grp) {
          const double* dyg = dy + (b * g.cout + grp * g.cout_g) * g.lout;
          const double* xg = xi->data.data() + (b * g.cin + grp * g.cin_g) * g.len;
          if (bi && wants_grad(bi)) {
            double* db = bi->grad.data() + grp * g.cout_g;
            for (std::size_t o = 0; o < g.cout_g; ++o) {
              double s = 0.0;
              for (std::size_t l = 0; l < g.lout; ++l) s += dyg[o * g.lout + l];
              db[o] += s;
            }
          }
          if (wants_grad(wi)) {
            const double* src = xg;
            if (!direct_layout(g)) {
              im2col(xg, g, col.data());
              src = col.data();
            }
            K.gemm_nt(g.cout_g, ck, g.lout, dyg, g.lout, src, g.lout, wi->grad.data() + grp * g.cout_g * ck, ck);
          }
          if (wants_grad(xi)) {
            double* dxg = xi->grad.data() + (b * g.cin + grp * g.cin_g) * g.len;
            const double* wg = wi->data.data() + grp * g.cout_g * ck;
            if (direct_layout(g)) {
              K.gemm_tn(ck, g.lout, g.cout_g, wg, ck, dyg, g.lout, dxg, g.len);
            } else {
              std::fill(dcol.begin(), dcol.end(), 0.0);
              K.gemm_tn(ck, g.lout, g.cout_g, wg, ck, dyg, g.lout, dcol.data(), g.lout);
              col2im(dcol.data(), g, dxg);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor maxpool1d(const Tensor& input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "maxpool1d input");
  if (kernel == 0 || stride == 0) throw ConfigError("maxpool1d: kernel and stride must be at least 1");
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  const std::size_t lout = conv_output_length(L, kernel, stride, padding);
  Tensor out = Tensor::zeros({B, C, lout});
  std::vector<std::size_t> argmax(B * C * lout);
  const double* x = input.data().data();
  double* y = out.data().data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const double* row = x + bc * L;
    for (std::size_t l = 0; l < lout; ++l) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(l * stride) - static_cast<std::ptrdiff_t>(padding);
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_at = L;
      for (std::size_t t = 0; t < kernel; ++t) {
        const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(t);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(L)) continue;
        if (best_at == L || row[pos] > best) {
          best = row[pos];
          best_at = static_cast<std::size_t>(pos);
        }
      }
      if (best_at == L) throw DimensionError("maxpool1d: window " + std::to_string(l) + " covers only padding");
      y[bc * lout + l] = best;
      argmax[bc * lout + l] = best_at;
    }
  }
  if (detail::should_record({&input})) {
    Impl xi = input.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {input}, [xi, yi, argmax = std::move(argmax), L, lout]() {
      const std::size_t rows = yi->data.size() / lout;
      for (std::size_t bc = 0; bc < rows; ++bc)
        for (std::size_t l = 0; l < lout; ++l)
          xi->grad[bc * L + argmax[bc * lout + l]] += yi->grad[bc * lout + l];
    });
  }
  return out;
}

Tensor channel_upsample(const Tensor& input, std::size_t factor, std::size_t groups) {
  require_rank(input, 3, "channel_upsample input");
  if (factor == 0) throw ConfigError("channel_upsample: factor must be at least 1");
  if (groups == 0 || input.dim(1) % groups != 0)
    throw ConfigError("channel_upsample: groups=" + std::to_string(groups) + " must divide C=" +
                      std::to_string(input.dim(1)));
  const std::size_t B = input.dim(0), C = input.dim(1), L = input.dim(2);
  // Contiguous group blocks make the output channel o read source o / factor
  // for every group count.
  Tensor out = Tensor::zeros({B, C * factor, L});
  const double* x = input.data().data();
  double* y = out.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < C * factor; ++o)
      std::copy_n(x + (b * C + o / factor) * L, L, y + (b * C * factor + o) * L);
  if (detail::should_record({&input})) {
    Impl xi = input.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {input}, [xi, yi, B, C, L, factor]() {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < C * factor; ++o) {
          const double* dy = yi->grad.data() + (b * C * factor + o) * L;
          double* dx = xi->grad.data() + (b * C + o / factor) * L;
          for (std::size_t l = 0; l < L; ++l) dx[l] += dy[l];
        }
    });
  }
  return out;
}

Tensor linear_grouped(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t groups) {
  require_rank(input, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  if (groups == 0) throw ConfigError("linear: groups must be at least 1");
  const std::size_t B = input.dim(0), F = input.dim(1), Fo = weight.dim(0);
  if (F % groups != 0 || Fo % groups != 0)
    throw ConfigError("linear: groups=" + std::to_string(groups) + " must divide F=" + std::to_string(F) +
                      " and F_out=" + std::to_string(Fo));
  const std::size_t Fg = F / groups, Fog = Fo / groups;
  if (weight.dim(1) != Fg)
    throw DimensionError("linear weight " + shape_str(weight.shape()) + " expects F/groups=" + std::to_string(Fg));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Fo))
    throw DimensionError("linear bias must have shape (" + std::to_string(Fo) + ")");

  Tensor out = Tensor::zeros({B, Fo});
  double* y = out.data().data();
  if (bias.defined())
    for (std::size_t b = 0; b < B; ++b) std::copy_n(bias.data().data(), Fo, y + b * Fo);
  const auto& K = simd::active();
  for (std::size_t grp = 0; grp < groups; ++grp)
    K.gemm_nt(B, Fog, Fg, input.data().data() + grp * Fg, F, weight.data().data() + grp * Fog * Fg, Fg,
              y + grp * Fog, Fo);

  if (detail::should_record({&input, &weight, &bias})) {
    Impl xi = input.impl_ptr(), wi = weight.impl_ptr(), bi = bias.defined() ? bias.impl_ptr() : nullptr;
    Impl yi = out.impl_ptr();
    std::vector<Tensor> ins{input, weight};
    if (bias.defined()) ins.push_back(bias);
    detail::record_op(out, std::move(ins), [xi, wi, bi, yi, B, F, Fo, Fg, Fog, groups]() {
      const auto& K = simd::active();
      const double* dy = yi->grad.data();
      if (bi && wants_grad(bi))
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t o = 0; o < Fo; ++o) bi->grad[o] += dy[b * Fo + o];
      for (std::size_t grp = 0; grp < groups; ++grp) {
        if (wants_grad(xi))
          K.gemm_nn(B, Fg, Fog, dy + grp * Fog, Fo, wi->data.data() + grp * Fog * Fg, Fg,
                    xi->grad.data() + grp * Fg, F);
        if (wants_grad(wi))
          K.gemm_tn(Fog, Fg, B, dy + grp * Fog, Fo, xi->data.data() + grp * Fg, F,
                    wi->grad.data() + grp * Fog * Fg, Fg);
      }
    });
  }
  return out;
}

Tensor weight_norm(const Tensor& v, const Tensor& g) {
  if (!v.defined() || !g.defined()) throw DimensionError("weight_norm: undefined operand");
  if (g.rank() != 1 || g.dim(0) != v.dim(0))
    throw DimensionError("weight_norm: g must have shape (" + std::to_string(v.dim(0)) + ")");
  const std::size_t rows = v.dim(0), width = v.numel() / rows;
  std::vector<double> norms(rows);
  Tensor out = Tensor::zeros(v.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* vr = v.data().data() + r * width;
    double ss = 0.0;
    for (std::size_t i = 0; i < width; ++i) ss += vr[i] * vr[i];
    const double n = std::sqrt(ss);
    if (!(n > 0.0) || !std::isfinite(n))
      throw NumericalError("weight_norm: direction vector of output channel " + std::to_string(r) +
                           " has zero or non-finite norm");
    norms[r] = n;
    const double s = g.data()[r] / n;
    double* wr = out.data().data() + r * width;
    for (std::size_t i = 0; i < width; ++i) wr[i] = s * vr[i];
  }
  if (detail::should_record({&v, &g})) {
    Impl vi = v.impl_ptr(), gi = g.impl_ptr(), wi = out.impl_ptr();
    detail::record_op(out, {v, g}, [vi, gi, wi, rows, width, norms = std::move(norms)]() {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* vr = vi->data.data() + r * width;
        const double* dw = wi->grad.data() + r * width;
        const double n = norms[r];
        double proj = 0.0;  // dw . v / ||v||
        for (std::size_t i = 0; i < width; ++i) proj += dw[i] * vr[i];
        proj /= n;
        if (wants_grad(gi)) gi->grad[r] += proj;
        if (wants_grad(vi)) {
          const double s = gi->data[r] / n;
          double* dv = vi->grad.data() + r * width;
          for (std::size_t i = 0; i < width; ++i) dv[i] += s * (dw[i] - proj * vr[i] / n);
        }
      }
    });
  }
  return out;
}

}  // namespace rtnet
