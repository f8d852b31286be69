#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "rtnet/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// any input requires a gradient; otherwise it is a plain forward computation.

namespace rtnet {

/// floor((length + 2*padding - kernel) / stride) + 1, or DimensionError when
/// the window does not fit.
std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Grouped 1-D convolution. input (B, C_in, L), weight (C_out, C_in/groups, k),
/// bias (C_out) or undefined. Output channel block g only reads input block g.
Tensor conv1d_grouped(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                      std::size_t padding, std::size_t groups);

/// Max pooling over the last axis of (B, C, L); padded cells never win.
/// Ties route the gradient to the lowest index.
Tensor maxpool1d(const Tensor& input, std::size_t kernel, std::size_t stride, std::size_t padding);

/// (B, C, L) -> (B, C*factor, L); each channel repeated `factor` times in place,
/// which keeps every group's channels contiguous.
Tensor channel_upsample(const Tensor& input, std::size_t factor, std::size_t groups);

/// Grouped affine map. input (B, F), weight (F_out, F/groups), bias (F_out).
Tensor linear_grouped(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t groups);

Tensor relu(const Tensor& input);

/// Inverted dropout: identity in eval mode or at rate 0.
Tensor dropout(const Tensor& input, double rate, std::mt19937_64& rng, bool training);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

/// Swaps the last two axes of a rank-3 tensor.
Tensor transpose12(const Tensor& a);

/// Keeps the trailing `length` elements of the last axis of (B, C, L).
Tensor slice_last(const Tensor& a, std::size_t length);

/// Concatenates along axis 1 with group-major order. Each part (B, C_i, ...)
/// is cut into `groups` equal blocks; the result holds, for g = 0..groups-1,
/// block g of part 0, block g of part 1, ... All parts must share the
/// trailing dimensions.
Tensor concat_grouped(std::span<const Tensor> parts, std::size_t groups);

/// (B, C, L) -> (B, times*C, L) by tiling the whole channel block.
Tensor repeat_channels(const Tensor& a, std::size_t times);

/// Effective weight g * v / ||v|| per output channel (axis 0 of v).
Tensor weight_norm(const Tensor& v, const Tensor& g);

}  // namespace rtnet
