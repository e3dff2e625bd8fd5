#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "terraexpr/tensor.hpp"

// Differentiable primitives. Every function checks its output for NaN/Inf and
// records a backward closure when grad mode is on and an input requires grad.
// Broadcasting is limited to scalar-vs-tensor: one operand may hold a single
// element.
namespace terraexpr {

enum class ElementwiseOp { add, sub, mul, div, pow, max };
enum class PoolKind { max, avg };

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp kind, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> elementwise(ElementwiseOp kind, const BasicTensor<T>& a, T b);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::mul, a, b);
}
template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::div, a, b);
}
template <typename T>
BasicTensor<T> pow(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::pow, a, b);
}
template <typename T>
BasicTensor<T> pow(const BasicTensor<T>& a, T exponent) {
  return elementwise(ElementwiseOp::pow, a, exponent);
}
template <typename T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::max, a, b);
}
template <typename T>
BasicTensor<T> maximum(const BasicTensor<T>& a, T b) {
  return elementwise(ElementwiseOp::max, a, b);
}

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) { return add(a, b); }
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) { return sub(a, b); }
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) { return mul(a, b); }
template <typename T>
BasicTensor<T> operator/(const BasicTensor<T>& a, const BasicTensor<T>& b) { return div(a, b); }
template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, T b) { return elementwise(ElementwiseOp::add, a, b); }
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, T b) { return elementwise(ElementwiseOp::sub, a, b); }
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, T b) { return elementwise(ElementwiseOp::mul, a, b); }
template <typename T>
BasicTensor<T> operator/(const BasicTensor<T>& a, T b) { return elementwise(ElementwiseOp::div, a, b); }
template <typename T>
BasicTensor<T> operator+(T a, const BasicTensor<T>& b) { return elementwise(ElementwiseOp::add, b, a); }
template <typename T>
BasicTensor<T> operator*(T a, const BasicTensor<T>& b) { return elementwise(ElementwiseOp::mul, b, a); }
template <typename T>
BasicTensor<T> operator-(T a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> exp(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> square(const BasicTensor<T>& x);

// Reductions to a single-element tensor of shape [1].
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

// out[i] = x[index[i]]; the backward pass scatter-adds.
template <typename T>
BasicTensor<T> gather(const BasicTensor<T>& x, std::span<const std::size_t> index, Shape shape);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// x[N,K] + bias[K] on every row.
template <typename T>
BasicTensor<T> add_row_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);
// x[N,C,H,W] + bias[C] on every spatial position.
template <typename T>
BasicTensor<T> add_channel_bias(const BasicTensor<T>& x, const BasicTensor<T>& bias);

// Zero-padded cross-correlation. input [N,C,H,W], kernel [F,C,k,k].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding);

// Unpadded window reduction. Max routes the gradient to the first maximum in
// row-major window order.
template <typename T>
BasicTensor<T> pool2d(PoolKind kind, const BasicTensor<T>& input, std::size_t window,
                      std::size_t stride);

// [N,C,H,W] -> [N,C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

// Along the last axis, with max subtraction.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// x[N,K] -> [N] with out[n] = x[n, index[n]].
template <typename T>
BasicTensor<T> select_per_row(const BasicTensor<T>& x, std::span<const std::size_t> index);

template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> var;
};

// Per-channel normalization over (N,H,W). In training the batch statistics are
// used and `running` is updated with `momentum`; otherwise `running` is used.
template <typename T>
BasicTensor<T> batch_norm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                            const BasicTensor<T>& beta, BatchNormStats<T>& running, bool training,
                            T momentum, T eps);

// Concatenates [N,Ci,H,W] tensors along the channel axis.
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);

// [N,D] -> [N,D,H,W], each value repeated over the plane.
template <typename T>
BasicTensor<T> tile_spatial(const BasicTensor<T>& x, std::size_t height, std::size_t width);

// Forward difference along axis 2 (rows) or 3 (columns) of a rank-4 tensor.
template <typename T>
BasicTensor<T> shift_difference(const BasicTensor<T>& x, std::size_t axis);

// [N,D] -> [N,D] where every row is the mean of the rows.
template <typename T>
BasicTensor<T> row_mean_broadcast(const BasicTensor<T>& x);

// out = a*image + (1-a)*color with a [N,1,H,W] shared across the channels of
// image and color [N,C,H,W].
template <typename T>
BasicTensor<T> attention_blend(const BasicTensor<T>& attention, const BasicTensor<T>& image,
                               const BasicTensor<T>& color);

}  // namespace terraexpr
