#include <algorithm>
#include <string>

#include "rtnet/error.hpp"
#include "rtnet/ops.hpp"
#include "rtnet/simd/kernels.hpp"
#include "rtnet/tape.hpp"

namespace rtnet {

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

bool wants_grad(const Impl& t) { return t && t->requires_grad && t->grad.size() == t->data.size(); }

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace

Tensor relu(const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  simd::active().relu(input.data().data(), out.data().data(), input.numel());
  if (detail::should_record({&input})) {
    Impl xi = input.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {input}, [xi, yi]() {
      simd::active().relu_backward(xi->data.data(), yi->grad.data(), xi->grad.data(), xi->data.size());
    });
  }
  return out;
}

Tensor dropout(const Tensor& input, double rate, std::mt19937_64& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(input.numel());
  for (auto& m : mask) m = u(rng) < rate ? 0.0 : keep_scale;
  Tensor out = Tensor::zeros(input.shape());
  const double* x = input.data().data();
  double* y = out.data().data();
  for (std::size_t i = 0; i < mask.size(); ++i) y[i] = x[i] * mask[i];
  if (detail::should_record({&input})) {
    Impl xi = input.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {input}, [xi, yi, mask = std::move(mask)]() {
      for (std::size_t i = 0; i < mask.size(); ++i) xi->grad[i] += yi->grad[i] * mask[i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  simd::active().add(a.data().data(), b.data().data(), out.data().data(), a.numel());
  if (detail::should_record({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a, b}, [ai, bi, yi]() {
      const auto& K = simd::active();
      if (wants_grad(ai)) K.axpy(1.0, yi->grad.data(), ai->grad.data(), yi->grad.size());
      if (wants_grad(bi)) K.axpy(1.0, yi->grad.data(), bi->grad.data(), yi->grad.size());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::should_record({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a, b}, [ai, bi, yi]() {
      const auto& K = simd::active();
      if (wants_grad(ai)) K.axpy(1.0, yi->grad.data(), ai->grad.data(), yi->grad.size());
      if (wants_grad(bi)) K.axpy(-1.0, yi->grad.data(), bi->grad.data(), yi->grad.size());
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::should_record({&a, &b})) {
    Impl ai = a.impl_ptr(), bi = b.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a, b}, [ai, bi, yi]() {
      const std::size_t n = yi->grad.size();
      if (wants_grad(ai))
        for (std::size_t i = 0; i < n; ++i) ai->grad[i] += yi->grad[i] * bi->data[i];
      if (wants_grad(bi))
        for (std::size_t i = 0; i < n; ++i) bi->grad[i] += yi->grad[i] * ai->data[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * factor;
  if (detail::should_record({&a})) {
    Impl ai = a.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a}, [ai, yi, factor]() {
      simd::active().axpy(factor, yi->grad.data(), ai->grad.data(), yi->grad.size());
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (detail::should_record({&a})) {
    Impl ai = a.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a}, [ai, yi]() {
      const double g = yi->grad[0];
      for (auto& d : ai->grad) d += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (detail::should_record({&a})) {
    Impl ai = a.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a}, [ai, yi]() {
      simd::active().axpy(1.0, yi->grad.data(), ai->grad.data(), yi->grad.size());
    });
  }
  return out;
}

Tensor transpose12(const Tensor& a) {
  if (a.rank() != 3) throw DimensionError("transpose12 needs rank 3, got " + shape_str(a.shape()));
  const std::size_t B = a.dim(0), R = a.dim(1), C = a.dim(2);
  Tensor out = Tensor::zeros({B, C, R});
  const double* x = a.data().data();
  double* y = out.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) y[(b * C + c) * R + r] = x[(b * R + r) * C + c];
  if (detail::should_record({&a})) {
    Impl ai = a.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a}, [ai, yi, B, R, C]() {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) ai->grad[(b * R + r) * C + c] += yi->grad[(b * C + c) * R + r];
    });
  }
  return out;
}

Tensor slice_last(const Tensor& a, std::size_t length) {
  if (a.rank() != 3) throw DimensionError("slice_last needs rank 3, got " + shape_str(a.shape()));
  const std::size_t rows = a.dim(0) * a.dim(1), L = a.dim(2);
  if (length == 0 || length > L)
    throw DimensionError("slice_last: cannot keep " + std::to_string(length) + " of " + std::to_string(L));
  const std::size_t off = L - length;
  Tensor out = Tensor::zeros({a.dim(0), a.dim(1), length});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.data().data() + r * L + off, length, out.data().data() + r * length);
  if (detail::should_record({&a})) {
    Impl ai = a.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a}, [ai, yi, rows, L, off, length]() {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t l = 0; l < length; ++l) ai->grad[r * L + off + l] += yi->grad[r * length + l];
    });
  }
  return out;
}

Tensor concat_grouped(std::span<const Tensor> parts, std::size_t groups) {
  if (parts.empty()) throw DimensionError("concat_grouped: no parts");
  if (groups == 0) throw ConfigError("concat_grouped: groups must be at least 1");
  const auto& first = parts.front().shape();
  if (first.size() < 2) throw DimensionError("concat_grouped: parts need rank >= 2");
  const std::size_t B = first[0];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> block;  // per-part block size in elements per batch row
  std::size_t total_c = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size() || s[0] != B || !std::equal(s.begin() + 2, s.end(), first.begin() + 2))
      throw DimensionError("concat_grouped: part " + shape_str(s) + " incompatible with " + shape_str(first));
    if (s[1] % groups != 0)
      throw ConfigError("concat_grouped: groups=" + std::to_string(groups) + " must divide " + std::to_string(s[1]));
    block.push_back(s[1] / groups * inner);
    total_c += s[1];
  }
  Shape out_shape = first;
  out_shape[1] = total_c;
  Tensor out = Tensor::zeros(out_shape);
  const std::size_t row = total_c * inner;
  auto for_each_block = [block, B, groups, row](auto&& fn) {
    for (std::size_t b = 0; b < B; ++b) {
      std::size_t dst = b * row;
      for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t p = 0; p < block.size(); ++p) {
          const std::size_t part_row = block[p] * groups;
          fn(p, b * part_row + g * block[p], dst, block[p]);
          dst += block[p];
        }
    }
  };
  double* y = out.data().data();
  for_each_block([&](std::size_t p, std::size_t src, std::size_t dst, std::size_t n) {
    std::copy_n(parts[p].data().data() + src, n, y + dst);
  });
  bool record = false;
  for (const auto& p : parts) record = record || detail::should_record({&p});
  if (record) {
    std::vector<Impl> ins;
    for (const auto& p : parts) ins.push_back(p.impl_ptr());
    Impl yi = out.impl_ptr();
    detail::record_op(out, std::vector<Tensor>(parts.begin(), parts.end()),
                      [ins, yi, for_each_block]() {
                        for_each_block([&](std::size_t p, std::size_t src, std::size_t dst, std::size_t n) {
                          if (!wants_grad(ins[p])) return;
                          double* dx = ins[p]->grad.data() + src;
                          const double* dy = yi->grad.data() + dst;
                          for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i];
                        });
                      });
  }
  return out;
}

Tensor repeat_channels(const Tensor& a, std::size_t times) {
  if (a.rank() != 3) throw DimensionError("repeat_channels needs rank 3, got " + shape_str(a.shape()));
  if (times == 0) throw ConfigError("repeat_channels: times must be at least 1");
  const std::size_t B = a.dim(0), block = a.dim(1) * a.dim(2);
  Tensor out = Tensor::zeros({B, a.dim(1) * times, a.dim(2)});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < times; ++t)
      std::copy_n(a.data().data() + b * block, block, out.data().data() + (b * times + t) * block);
  if (detail::should_record({&a})) {
    Impl ai = a.impl_ptr(), yi = out.impl_ptr();
    detail::record_op(out, {a}, [ai, yi, B, block, times]() {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < times; ++t)
          simd::active().axpy(1.0, yi->grad.data() + (b * times + t) * block, ai->grad.data() + b * block, block);
    });
  }
  return out;
}

}  // namespace rtnet
