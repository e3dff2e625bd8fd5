#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "terraexpr/ops.hpp"
#include "terraexpr/random.hpp"
#include "terraexpr/tensor.hpp"

namespace terraexpr {

enum class Mode { train, eval };

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
  bool trainable = true;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, bool with_bias, Rng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

  std::size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1, padding = 0;
  BasicTensor<T> weight;
  BasicTensor<T> bias;  // undefined when the layer has no bias
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

  std::size_t in_features = 0, out_features = 0;
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]
};

// Training mode uses batch statistics (a batch of one therefore normalizes
// with that sample's own statistics); eval mode uses the running estimates.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

  std::size_t channels = 0;
  T momentum = T(0.1);
  T eps = T(1e-5);
  BasicTensor<T> gamma, beta;
  BasicTensor<T> running_mean, running_var;
};

// y = F(x) + skip(x), F = conv -> norm -> relu -> conv -> norm. The skip path
// is a 1x1 projection with norm when the stride or channel count changes.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode);
  BasicTensor<T> residual_branch(const BasicTensor<T>& x, Mode mode);
  BasicTensor<T> skip_path(const BasicTensor<T>& x, Mode mode);
  bool has_projection() const { return projection.weight.defined(); }
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const;

  std::size_t in_channels = 0, out_channels = 0, stride = 1;
  Conv2d<T> conv1, conv2, projection;
  BatchNorm2d<T> norm1, norm2, projection_norm;
};

template <typename T>
std::vector<BasicTensor<T>> trainable(const std::vector<NamedTensor<T>>& state);

// Copies values from `source` into same-named tensors of `target`.
template <typename T>
void copy_state(const std::vector<NamedTensor<T>>& source, std::vector<NamedTensor<T>>& target);

}  // namespace terraexpr
