#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "terraexpr/nn.hpp"
#include "terraexpr/tensor.hpp"

// Pooling substitute placed between the last convolutional stage and the
// classifier: feature arrangement, de-albino weighting, and sharing affinity.
namespace terraexpr {

// A map [N, s*s, H, W] laid out as one channel [N, 1, s*H, s*W]. Channel c at
// (h, w) lands on (h*s + c/s, w*s + c%s), so every s x s cell holds all
// channels of one spatial position.
template <typename T>
struct ArrangedPlane {
  BasicTensor<T> plane;
  std::size_t side = 1;
};

// Kernel and zero padding of one stride-1 convolution feeding the map.
struct ConvWindow {
  std::size_t kernel = 1;
  std::size_t padding = 0;
};

// Fixed weights over plane positions: (k^2 - z) / k^2 with z the number of
// receptive-window taps that fall on zero padding. For a stack of stride-1
// convolutions the effective window is 1 + sum(k_i - 1) wide with
// sum(p_i) padding.
struct DeAlbinoWeights {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// Throws ShapeError unless the channel count is a perfect square.
std::size_t arrangement_side(std::size_t channels);

template <typename T>
ArrangedPlane<T> feature_arrange(const BasicTensor<T>& fmap);

template <typename T>
BasicTensor<T> inverse_arrange(const ArrangedPlane<T>& arranged);

DeAlbinoWeights de_albino_weights(std::size_t map_height, std::size_t map_width, std::size_t side,
                                  std::span<const ConvWindow> conv_stack);

template <typename T>
ArrangedPlane<T> de_albino(const ArrangedPlane<T>& arranged, std::span<const ConvWindow> conv_stack);

// train: f' = lambda*f + (1-lambda)*mean_batch(f), lambda = sigmoid(logit).
// eval: identity.
template <typename T>
BasicTensor<T> share_affinity(const BasicTensor<T>& features, Mode mode,
                              const BasicTensor<T>& lambda_logit);

// fmap [N,C,H,W] -> [N,C]: arrange, de-albino, per-channel spatial average
// of the weighted plane, sharing affinity.
template <typename T>
BasicTensor<T> arm_forward(const BasicTensor<T>& fmap, std::span<const ConvWindow> conv_stack,
                           Mode mode, const BasicTensor<T>& lambda_logit);

template <typename T>
class ArmHead {
 public:
  ArmHead() = default;
  ArmHead(std::size_t channels, std::vector<ConvWindow> conv_stack, T initial_logit = T(4));

  BasicTensor<T> forward(const BasicTensor<T>& fmap, Mode mode) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

  std::size_t channels = 0;
  std::vector<ConvWindow> conv_stack;
  BasicTensor<T> lambda_logit;
};

}  // namespace terraexpr
