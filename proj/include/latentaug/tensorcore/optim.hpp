#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "latentaug/core/error.hpp"
#include "latentaug/tensorcore/tensor.hpp"

namespace latentaug::tensorcore {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay: the decay shrinks parameters directly
/// (p *= 1 - lr*wd) instead of being folded into the gradient.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  std::size_t steps() const { return t_; }

  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
    if (params.size() != grads.size()) throw DimensionError("AdamW: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    if (m_.size() != params.size()) throw StateError("AdamW: parameter set changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *grads[i];
      if (g.size() != p.size()) throw DimensionError("AdamW: gradient shape differs from parameter");
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
        p[j] *= 1.0 - cfg_.lr * cfg_.weight_decay;
        p[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace latentaug::tensorcore
