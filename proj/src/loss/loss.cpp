#include "terraexpr/loss.hpp"

#include <stdexcept>

#include "terraexpr/ops.hpp"

namespace terraexpr {

double LossConfig::alpha_for(std::size_t label) const {
  if (alpha.size() == 1) return alpha.front();
  return alpha.at(label);
}

void LossConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal gamma must be >= 0");
  if (alpha.empty()) throw std::invalid_argument("alpha needs at least one entry");
  for (double a : alpha)
    if (!(a > 0.0)) throw std::invalid_argument("alpha entries must be > 0");
}

namespace {

template <typename T>
BasicTensor<T> true_class_probability(const BasicTensor<T>& probs, std::span<const std::size_t> labels) {
  if (probs.rank() != 2) throw ShapeError("loss expects probabilities [N,K]");
  for (auto label : labels) {
    if (label >= probs.dim(1)) {
      throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                              std::to_string(probs.dim(1)) + ")");
    }
  }
  return maximum(select_per_row(probs, labels), static_cast<T>(kProbabilityFloor));
}

template <typename T>
BasicTensor<T> reduce(const BasicTensor<T>& per_sample, Reduction reduction) {
  return reduction == Reduction::mean ? mean(per_sample) : sum(per_sample);
}

}  // namespace

template <typename T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& probs, std::span<const std::size_t> labels,
                             Reduction reduction) {
  const auto pt = true_class_probability(probs, labels);
  return reduce(-log(pt), reduction);
}

template <typename T>
BasicTensor<T> focal_loss(const BasicTensor<T>& probs, std::span<const std::size_t> labels,
                          const LossConfig& cfg) {
  cfg.validate();
  const auto pt = true_class_probability(probs, labels);
  std::vector<T> alphas(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) alphas[i] = static_cast<T>(cfg.alpha_for(labels[i]));
  const auto alpha = BasicTensor<T>::from_data({labels.size()}, std::move(alphas));
  const auto modulating = pow(T(1) - pt, static_cast<T>(cfg.gamma));
  return reduce(-(alpha * modulating * log(pt)), cfg.reduction);
}

template <typename T>
BasicTensor<T> classification_loss(const BasicTensor<T>& probs, std::span<const std::size_t> labels,
                                   const LossConfig& cfg) {
  if (cfg.kind == LossKind::focal) return focal_loss(probs, labels, cfg);
  return cross_entropy(probs, labels, cfg.reduction);
}

template BasicTensor<double> cross_entropy(const BasicTensor<double>&, std::span<const std::size_t>, Reduction);
template BasicTensor<float> cross_entropy(const BasicTensor<float>&, std::span<const std::size_t>, Reduction);
template BasicTensor<double> focal_loss(const BasicTensor<double>&, std::span<const std::size_t>, const LossConfig&);
template BasicTensor<float> focal_loss(const BasicTensor<float>&, std::span<const std::size_t>, const LossConfig&);
template BasicTensor<double> classification_loss(const BasicTensor<double>&, std::span<const std::size_t>,
                                                 const LossConfig&);
template BasicTensor<float> classification_loss(const BasicTensor<float>&, std::span<const std::size_t>,
                                                const LossConfig&);

}  // namespace terraexpr
