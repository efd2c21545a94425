#pragma once

#include <cmath>
#include <vector>

#include "eafm/model.hpp"

namespace eafm {

struct AdamWOptions {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay: p <- p (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
template <class T>
class AdamW {
 public:
  AdamW(const ModelParams<T>& shape_like, AdamWOptions opts)
      : opts_(opts),
        m_(ModelParams<T>::zeros(shape_like.shape())),
        v_(ModelParams<T>::zeros(shape_like.shape())) {}

  void step(ModelParams<T>& params, const ModelParams<T>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const T lr = static_cast<T>(opts_.lr);
    const T decay = static_cast<T>(1.0 - opts_.lr * opts_.weight_decay);
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T eps = static_cast<T>(opts_.eps);
    const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
    auto p = params.groups();
    auto g = grad.groups();
    auto m = m_.groups();
    auto v = v_.groups();
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto& pm = *p[i].second;
      const auto& gm = *g[i].second;
      auto& mm = *m[i].second;
      auto& vm = *v[i].second;
      for (Eigen::Index k = 0; k < pm.size(); ++k) {
        const T gk = gm.data()[k];
        T& mk = mm.data()[k];
        T& vk = vm.data()[k];
        mk = b1 * mk + (T(1) - b1) * gk;
        vk = b2 * vk + (T(1) - b2) * gk * gk;
        const T update = lr * (mk * inv_bc1) / (std::sqrt(vk * inv_bc2) + eps);
        pm.data()[k] = pm.data()[k] * decay - update;
      }
    }
  }

  long steps() const { return t_; }

 private:
  AdamWOptions opts_;
  ModelParams<T> m_;
  ModelParams<T> v_;
  long t_ = 0;
};

}  // namespace eafm
