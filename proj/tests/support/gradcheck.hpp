#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "terraexpr/ops.hpp"
#include "terraexpr/random.hpp"

namespace testing_support {

using terraexpr::Tensor;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
};

// Relative error with a small floor on the denominator so gradients that
// vanish analytically are compared absolutely.
inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / scale;
}

// Central differences, h = 1e-5, over every element of every leaf.
inline GradCheckResult grad_check(std::vector<Tensor> leaves, const std::function<Tensor()>& loss,
                                  double h = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) {
      analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    } else {
      analytic.emplace_back(leaf.numel(), 0.0);
    }
  }
  GradCheckResult result;
  terraexpr::NoGradGuard guard;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss().item();
      values[i] = saved - h;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_error(analytic[l][i], numeric);
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "leaf " + std::to_string(l) + " elem " + std::to_string(i) + " analytic " +
                       std::to_string(analytic[l][i]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

inline Tensor random_tensor(terraexpr::Shape shape, terraexpr::Rng& rng, double lo = -1.0,
                            double hi = 1.0, bool requires_grad = true) {
  std::vector<double> values(terraexpr::shape_numel(shape));
  for (auto& v : values) v = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(values), requires_grad);
}

// Fixed random weights so a tensor-valued output can be checked through a scalar.
inline Tensor weighted_sum(const Tensor& x, std::uint64_t seed) {
  terraexpr::Rng rng(seed);
  const auto w = random_tensor(x.shape(), rng, -1.0, 1.0, false);
  return terraexpr::sum(terraexpr::mul(x, w));
}

// Random weights on a 4x4 window of each plane, zero elsewhere. Only
// activations in the window's receptive field reach the scalar directly, so
// few ReLU kinks sit within a finite-difference step.
inline Tensor window_sum(const Tensor& x, std::uint64_t seed) {
  terraexpr::Rng rng(seed);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const auto y0 = static_cast<std::size_t>(rng.below(h - 3)), x0 = static_cast<std::size_t>(rng.below(w - 3));
  std::vector<double> weights(x.numel(), 0.0);
  for (std::size_t plane = 0; plane < x.dim(0) * x.dim(1); ++plane)
    for (std::size_t y = y0; y < y0 + 4; ++y)
      for (std::size_t xx = x0; xx < x0 + 4; ++xx) weights[(plane * h + y) * w + xx] = rng.uniform(-1.0, 1.0);
  return terraexpr::sum(terraexpr::mul(x, Tensor::from_data(x.shape(), std::move(weights))));
}

}  // namespace testing_support
