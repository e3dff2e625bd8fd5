#include "terraexpr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace terraexpr {

namespace {

template <typename T>
BasicTensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.uniform(-bound, bound));
  return BasicTensor<T>::from_data(std::move(shape), std::move(values), true);
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t s, std::size_t p,
                  bool with_bias, Rng& rng)
    : in_channels(in), out_channels(out), kernel(k), stride(s), padding(p) {
  const double fan_in = static_cast<double>(in * k * k);
  weight = uniform_tensor<T>({out, in, k, k}, std::sqrt(6.0 / fan_in), rng);
  if (with_bias) bias = BasicTensor<T>::zeros({out}, true);
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x) const {
  auto y = conv2d(x, weight, stride, padding);
  return bias.defined() ? add_channel_bias(y, bias) : y;
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, true});
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng) : in_features(in), out_features(out) {
  weight = uniform_tensor<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  bias = BasicTensor<T>::zeros({out}, true);
}

template <typename T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x) const {
  return add_row_bias(matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".weight", weight, true});
  out.push_back({prefix + ".bias", bias, true});
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t c)
    : channels(c),
      gamma(BasicTensor<T>::full({c}, T(1), true)),
      beta(BasicTensor<T>::zeros({c}, true)),
      running_mean(BasicTensor<T>::zeros({c})),
      running_var(BasicTensor<T>::full({c}, T(1))) {}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& x, Mode mode) {
  BatchNormStats<T> stats{{running_mean.data().begin(), running_mean.data().end()},
                          {running_var.data().begin(), running_var.data().end()}};
  auto y = batch_norm2d(x, gamma, beta, stats, mode == Mode::train, momentum, eps);
  if (mode == Mode::train) {
    std::copy(stats.mean.begin(), stats.mean.end(), running_mean.mutable_data().begin());
    std::copy(stats.var.begin(), stats.var.end(), running_var.mutable_data().begin());
  }
  return y;
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".gamma", gamma, true});
  out.push_back({prefix + ".beta", beta, true});
  out.push_back({prefix + ".running_mean", running_mean, false});
  out.push_back({prefix + ".running_var", running_var, false});
}

template <typename T>
ResidualBlock<T>::ResidualBlock(std::size_t in, std::size_t out, std::size_t s, Rng& rng)
    : in_channels(in),
      out_channels(out),
      stride(s),
      conv1(in, out, 3, s, 1, false, rng),
      conv2(out, out, 3, 1, 1, false, rng),
      norm1(out),
      norm2(out) {
  if (s != 1 || in != out) {
    projection = Conv2d<T>(in, out, 1, s, 0, false, rng);
    projection_norm = BatchNorm2d<T>(out);
  }
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::residual_branch(const BasicTensor<T>& x, Mode mode) {
  auto h = relu(norm1.forward(conv1.forward(x), mode));
  return norm2.forward(conv2.forward(h), mode);
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::skip_path(const BasicTensor<T>& x, Mode mode) {
  if (!has_projection()) return x;
  return projection_norm.forward(projection.forward(x), mode);
}

template <typename T>
BasicTensor<T> ResidualBlock<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != in_channels) {
    throw ShapeError("residual block expects " + std::to_string(in_channels) + " channels, got " +
                     shape_string(x.shape()));
  }
  return add(residual_branch(x, mode), skip_path(x, mode));
}

template <typename T>
void ResidualBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  conv1.collect(prefix + ".conv1", out);
  norm1.collect(prefix + ".norm1", out);
  conv2.collect(prefix + ".conv2", out);
  norm2.collect(prefix + ".norm2", out);
  if (has_projection()) {
    projection.collect(prefix + ".projection", out);
    projection_norm.collect(prefix + ".projection_norm", out);
  }
}

template <typename T>
std::vector<BasicTensor<T>> trainable(const std::vector<NamedTensor<T>>& state) {
  std::vector<BasicTensor<T>> params;
  for (const auto& entry : state)
    if (entry.trainable) params.push_back(entry.tensor);
  return params;
}

template <typename T>
void copy_state(const std::vector<NamedTensor<T>>& source, std::vector<NamedTensor<T>>& target) {
  if (source.size() != target.size()) throw std::invalid_argument("state size mismatch");
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i].name != target[i].name || source[i].tensor.shape() != target[i].tensor.shape()) {
      throw std::invalid_argument("state entry mismatch at " + target[i].name);
    }
    auto dst = target[i].tensor.mutable_data();
    const auto src = source[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

template class Conv2d<double>;
template class Conv2d<float>;
template class Linear<double>;
template class Linear<float>;
template class BatchNorm2d<double>;
template class BatchNorm2d<float>;
template class ResidualBlock<double>;
template class ResidualBlock<float>;
template std::vector<BasicTensor<double>> trainable(const std::vector<NamedTensor<double>>&);
template std::vector<BasicTensor<float>> trainable(const std::vector<NamedTensor<float>>&);
template void copy_state(const std::vector<NamedTensor<double>>&, std::vector<NamedTensor<double>>&);
template void copy_state(const std::vector<NamedTensor<float>>&, std::vector<NamedTensor<float>>&);

}  // namespace terraexpr
