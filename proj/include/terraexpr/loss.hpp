#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "terraexpr/tensor.hpp"

namespace terraexpr {

enum class LossKind { cross_entropy, focal };
enum class Reduction { mean, sum };

struct LossConfig {
  LossKind kind = LossKind::focal;
  // Per-class weights; one entry is broadcast to every class.
  std::vector<double> alpha{0.25};
  double gamma = 2.0;
  Reduction reduction = Reduction::mean;

  double alpha_for(std::size_t label) const;
  void validate() const;
};

inline constexpr double kProbabilityFloor = 1e-12;

// -log(p_t) per sample, p_t clamped to the floor, reduced over the batch.
template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::span<const std::size_t> labels,
                             Reduction reduction = Reduction::mean);

// -alpha_t * (1 - p_t)^gamma * log(p_t) per sample, reduced over the batch.
template <typename T>
BasicTensor<T> focal_loss(const BasicTensor<T>& probs, std::span<const std::size_t> labels,
                          const LossConfig& cfg);

// Dispatches on cfg.kind; probs are softmax outputs.
template <typename T>
BasicTensor<T> classification_loss(const BasicTensor<T>& probs, std::span<const std::size_t> labels,
                                   const LossConfig& cfg);

}  // namespace terraexpr
