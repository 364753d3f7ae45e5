#pragma once

#include <vector>

#include "vitas/tensor.hpp"

// Differentiable tensor operations. All ops check shapes and raise ShapeError
// naming the offending axis; none broadcast implicitly. Use
// broadcast_replicate to align extents explicitly.
namespace vitas::ops {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
/// (a + eps)^(-1/2)
template <typename T> Tensor<T> rsqrt(const Tensor<T>& a, T eps);

/// Matrix product over the last two axes. Rank 2 x rank 2, or rank 3 x rank 3
/// with equal leading (batch) extent. With transpose_b, b is read as [.., n, k].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Affine map over the last axis: x[..., in] -> [..., out], weight [out, in].
/// `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Cross-correlation. input [c_in, h, w], weight [c_out, c_in, k, k].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int pad);

/// Adjoint of conv2d. input [c_in, h, w], weight [c_in, c_out, k, k]; padding
/// is (k - stride) / 2 so the output is exactly [c_out, h*stride, w*stride].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           int stride);

/// Max-subtracted softmax along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& input, int axis);

/// Normalizes over the last axis, then applies gamma/beta of extent c.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

/// input [c, h, w]; statistics per group of c/groups channels.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& input, int groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps);

/// Repeats an extent-1 axis `factor` times (RepPad). An axis already at
/// extent `factor` passes through unchanged.
template <typename T> Tensor<T> broadcast_replicate(const Tensor<T>& input, int axis, std::int64_t factor);

template <typename T> Tensor<T> sum(const Tensor<T>& input, int axis, bool keepdim = true);
template <typename T> Tensor<T> mean(const Tensor<T>& input, int axis, bool keepdim = true);
template <typename T> Tensor<T> sum_all(const Tensor<T>& input);
template <typename T> Tensor<T> mean_all(const Tensor<T>& input);

template <typename T> Tensor<T> reshape(const Tensor<T>& input, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& input, const std::vector<int>& order);

/// out.flat[i] = input.flat[index[i]]; index -1 yields 0. Gradient scatters back.
template <typename T>
Tensor<T> gather(const Tensor<T>& input, const std::vector<std::int64_t>& index, Shape out_shape);

/// input [c, h, w] -> [c, out_h, out_w], half-pixel centers (align_corners=false).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w);

template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& inputs, int axis);

/// Mean smooth-L1 (beta = 1) over entries where mask != 0.
template <typename T>
Tensor<T> smooth_l1_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<std::uint8_t>& mask);

/// Unit-normalizes vectors along `axis`.
template <typename T> Tensor<T> l2_normalize(const Tensor<T>& input, int axis, T eps);

}  // namespace vitas::ops
