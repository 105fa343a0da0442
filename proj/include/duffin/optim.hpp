#pragma once

#include <cmath>
#include <vector>

#include "duffin/autograd.hpp"

namespace duffin {

// Adam with bias correction. Moments persist across calls; the step
// counter is shared by all parameters.
template <typename T>
class Adam {
 public:
  explicit Adam(const ParameterStore<T>& store, T beta1 = T(0.9), T beta2 = T(0.999),
                T eps = T(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& r : store.records()) {
      m_.emplace_back(r.var.shape());
      v_.emplace_back(r.var.shape());
    }
  }

  void step(ParameterStore<T>& store, T lr) {
    if (store.size() != m_.size()) throw config_error("adam: store does not match optimizer state");
    for (const auto& r : store.records())
      if (r.trainable && !r.var.node().grad_populated)
        throw config_error("adam: gradient of '" + r.name + "' was never populated");
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < store.size(); ++i) {
      auto& r = store.records()[i];
      if (!r.trainable) continue;
      Tensor<T>& m = m_[i];
      Tensor<T>& v = v_[i];
      Tensor<T>& value = r.var.value();
      const Tensor<T>& grad = r.var.grad();
      for (size_t j = 0; j < value.numel(); ++j) {
        const T g = grad[j];
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g;
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g * g;
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long step_count() const { return t_; }

 private:
  T beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace duffin
