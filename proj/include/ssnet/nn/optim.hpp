#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ssnet/error.hpp"
#include "ssnet/nn/layers.hpp"

namespace ssnet::nn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

// Trainable parameters of a model plus Adam moment estimates.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(const std::vector<Param<T>*>& all) {
    for (auto* p : all) {
      if (!p->trainable) continue;
      params_.push_back(p);
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  const std::vector<Param<T>*>& params() const { return params_; }
  long step_count() const { return step_; }

  void zero_grad() {
    for (auto* p : params_) p->grad.fill(T{0});
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (auto* p : params_) n += p->value.size();
    return n;
  }

  // theta -= lr * m_hat / (sqrt(v_hat) + eps)
  void adam_step(const AdamConfig& cfg) {
    for (auto* p : params_) {
      for (T g : p->grad.values()) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NumericError("non-finite gradient in parameter '" + p->name + "' at step " +
                             std::to_string(step_ + 1));
        }
      }
    }
    ++step_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k]->value;
      const auto& grad = params_[k]->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        value[i] = static_cast<T>(value[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
      }
    }
  }

 private:
  std::vector<Param<T>*> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long step_ = 0;
};

}  // namespace ssnet::nn
