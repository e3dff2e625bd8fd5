#include "terraexpr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace terraexpr {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("adam lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("adam eps must be > 0");
}

template <typename T>
void adam_step(std::vector<BasicTensor<T>>& params, AdamState<T>& state, const AdamConfig& cfg, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    if (state.m[i].size() != p.numel()) throw std::invalid_argument("adam state size mismatch");
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const double m_hat = static_cast<double>(m[k]) / c1;
      const double v_hat = static_cast<double>(v[k]) / c2;
      w[k] = static_cast<T>(static_cast<double>(w[k]) - lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

template <typename T>
Adam<T>::Adam(std::vector<BasicTensor<T>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg), lr_(cfg.lr) {
  cfg_.validate();
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double decayed_lr(double lr0, double decay, std::size_t epoch) {
  return lr0 * std::pow(decay, static_cast<double>(epoch));
}

template void adam_step(std::vector<BasicTensor<double>>&, AdamState<double>&, const AdamConfig&, double);
template void adam_step(std::vector<BasicTensor<float>>&, AdamState<float>&, const AdamConfig&, double);
template class Adam<double>;
template class Adam<float>;

}  // namespace terraexpr
