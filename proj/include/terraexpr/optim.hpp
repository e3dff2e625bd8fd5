#pragma once

#include <cstddef>
#include <vector>

#include "terraexpr/tensor.hpp"

namespace terraexpr {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m, v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of every parameter that holds a gradient.
// Parameters without a gradient are left untouched.
template <typename T>
void adam_step(std::vector<BasicTensor<T>>& params, AdamState<T>& state, const AdamConfig& cfg, double lr);

template <typename T>
class Adam {
 public:
  Adam(std::vector<BasicTensor<T>> params, AdamConfig cfg);

  void step() { adam_step(params_, state_, cfg_, lr_); }
  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  AdamState<T>& state() { return state_; }
  const AdamState<T>& state() const { return state_; }

 private:
  std::vector<BasicTensor<T>> params_;
  AdamConfig cfg_;
  double lr_;
  AdamState<T> state_;
};

// lr0 * decay^epoch
double decayed_lr(double lr0, double decay, std::size_t epoch);

}  // namespace terraexpr
