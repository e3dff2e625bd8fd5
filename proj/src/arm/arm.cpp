#include "terraexpr/arm.hpp"

#include <cmath>

namespace terraexpr {

std::size_t arrangement_side(std::size_t channels) {
  auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(channels))));
  if (side * side != channels) {
    throw ShapeError("feature arrangement needs a square channel count, got " +
                     std::to_string(channels));
  }
  return side;
}

namespace {

// Flat source index in [N,C,H,W] for each plane position of [N,1,sH,sW].
std::vector<std::size_t> arrangement_index(std::size_t batch, std::size_t side, std::size_t height,
                                           std::size_t width) {
  const std::size_t channels = side * side;
  const std::size_t plane_h = side * height, plane_w = side * width;
  std::vector<std::size_t> index(batch * plane_h * plane_w);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t h = 0; h < height; ++h)
        for (std::size_t w = 0; w < width; ++w) {
          const std::size_t py = h * side + c / side, px = w * side + c % side;
          index[(n * plane_h + py) * plane_w + px] = ((n * channels + c) * height + h) * width + w;
        }
  return index;
}

}  // namespace

template <typename T>
ArrangedPlane<T> feature_arrange(const BasicTensor<T>& fmap) {
  if (fmap.rank() != 4) throw ShapeError("feature_arrange expects [N,C,H,W]");
  const std::size_t side = arrangement_side(fmap.dim(1));
  const std::size_t n = fmap.dim(0), h = fmap.dim(2), w = fmap.dim(3);
  const auto index = arrangement_index(n, side, h, w);
  return {gather(fmap, std::span<const std::size_t>(index), Shape{n, 1, side * h, side * w}), side};
}

template <typename T>
BasicTensor<T> inverse_arrange(const ArrangedPlane<T>& arranged) {
  const auto& plane = arranged.plane;
  if (plane.rank() != 4 || plane.dim(1) != 1) throw ShapeError("inverse_arrange expects [N,1,sH,sW]");
  const std::size_t side = arranged.side;
  if (plane.dim(2) % side != 0 || plane.dim(3) % side != 0) {
    throw ShapeError("plane extents are not multiples of the arrangement side");
  }
  const std::size_t n = plane.dim(0), h = plane.dim(2) / side, w = plane.dim(3) / side;
  const auto forward = arrangement_index(n, side, h, w);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  return gather(plane, std::span<const std::size_t>(inverse), Shape{n, side * side, h, w});
}

DeAlbinoWeights de_albino_weights(std::size_t map_height, std::size_t map_width, std::size_t side,
                                  std::span<const ConvWindow> conv_stack) {
  std::size_t kernel = 1, padding = 0;
  for (const auto& conv : conv_stack) {
    kernel += conv.kernel - 1;
    padding += conv.padding;
  }
  // The map is the output of the window; its input extent along an axis is
  // map + k - 1 - 2p. Count the taps of output position `pos` that land inside.
  if (map_height + kernel - 1 < 2 * padding + 1 || map_width + kernel - 1 < 2 * padding + 1) {
    throw ShapeError("de-albino: padding too large for the feature map");
  }
  auto inside = [&](std::size_t pos, std::size_t map_extent) {
    const std::size_t extent = map_extent + kernel - 1 - 2 * padding;
    std::size_t count = 0;
    for (std::size_t t = 0; t < kernel; ++t) {
      const long at = static_cast<long>(pos + t) - static_cast<long>(padding);
      if (at >= 0 && at < static_cast<long>(extent)) ++count;
    }
    return count;
  };
  DeAlbinoWeights weights;
  weights.rows = side * map_height;
  weights.cols = side * map_width;
  weights.values.resize(weights.rows * weights.cols);
  const double taps = static_cast<double>(kernel * kernel);
  for (std::size_t r = 0; r < weights.rows; ++r)
    for (std::size_t c = 0; c < weights.cols; ++c) {
      const std::size_t valid = inside(r / side, map_height) * inside(c / side, map_width);
      if (valid == 0) throw ShapeError("de-albino: window lies entirely in padding");
      const double padded = taps - static_cast<double>(valid);
      weights.values[r * weights.cols + c] = (taps - padded) / taps;
    }
  return weights;
}

template <typename T>
ArrangedPlane<T> de_albino(const ArrangedPlane<T>& arranged, std::span<const ConvWindow> conv_stack) {
  const auto& plane = arranged.plane;
  const std::size_t side = arranged.side;
  const std::size_t n = plane.dim(0), rows = plane.dim(2), cols = plane.dim(3);
  const auto weights = de_albino_weights(rows / side, cols / side, side, conv_stack);
  std::vector<T> tiled(n * rows * cols);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < rows * cols; ++i) tiled[b * rows * cols + i] = static_cast<T>(weights.values[i]);
  auto w = BasicTensor<T>::from_data(plane.shape(), std::move(tiled));
  return {mul(plane, w), side};
}

template <typename T>
BasicTensor<T> share_affinity(const BasicTensor<T>& features, Mode mode,
                              const BasicTensor<T>& lambda_logit) {
  if (features.rank() != 2) throw ShapeError("share_affinity expects [N,D]");
  if (mode == Mode::eval) return features;
  const auto lambda = sigmoid(lambda_logit);
  return add(mul(features, lambda), mul(row_mean_broadcast(features), T(1) - lambda));
}

template <typename T>
BasicTensor<T> arm_forward(const BasicTensor<T>& fmap, std::span<const ConvWindow> conv_stack,
                           Mode mode, const BasicTensor<T>& lambda_logit) {
  const auto arranged = feature_arrange(fmap);
  const auto weighted = de_albino(arranged, conv_stack);
  const auto pooled = global_avg_pool(inverse_arrange(weighted));
  return share_affinity(pooled, mode, lambda_logit);
}

template <typename T>
ArmHead<T>::ArmHead(std::size_t c, std::vector<ConvWindow> stack, T initial_logit)
    : channels(c), conv_stack(std::move(stack)), lambda_logit(BasicTensor<T>::scalar(initial_logit, true)) {
  arrangement_side(c);
}

template <typename T>
BasicTensor<T> ArmHead<T>::forward(const BasicTensor<T>& fmap, Mode mode) const {
  return arm_forward(fmap, std::span<const ConvWindow>(conv_stack), mode, lambda_logit);
}

template <typename T>
void ArmHead<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
  out.push_back({prefix + ".lambda_logit", lambda_logit, true});
}

#define TERRAEXPR_INSTANTIATE_ARM(T)                                                                \
  template ArrangedPlane<T> feature_arrange(const BasicTensor<T>&);                                 \
  template BasicTensor<T> inverse_arrange(const ArrangedPlane<T>&);                                 \
  template ArrangedPlane<T> de_albino(const ArrangedPlane<T>&, std::span<const ConvWindow>);        \
  template BasicTensor<T> share_affinity(const BasicTensor<T>&, Mode, const BasicTensor<T>&);       \
  template BasicTensor<T> arm_forward(const BasicTensor<T>&, std::span<const ConvWindow>, Mode,     \
                                      const BasicTensor<T>&);                                       \
  template class ArmHead<T>;

TERRAEXPR_INSTANTIATE_ARM(double)
TERRAEXPR_INSTANTIATE_ARM(float)

#undef TERRAEXPR_INSTANTIATE_ARM

}  // namespace terraexpr
