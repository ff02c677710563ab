#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vidctl/nn/nn.hpp"

namespace vidctl::nn {

// Cosine learning-rate schedule from base_lr down to floor_frac * base_lr,
// with an optional linear warmup. No restarts.
struct CosineSchedule {
  double base_lr = 1e-3;
  int64_t total_steps = 1;
  int64_t warmup_steps = 0;
  double floor_frac = 0.0;

  double lr_at(int64_t step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    const double t = std::min(1.0, static_cast<double>(step - warmup_steps) /
                                       std::max<double>(1.0, double(total_steps - warmup_steps)));
    const double c = 0.5 * (1.0 + std::cos(M_PI * t));
    return base_lr * (floor_frac + (1.0 - floor_frac) * c);
  }
};

// AdamW with decoupled weight decay and per-group learning-rate scaling.
template <typename T>
class AdamW {
 public:
  struct Group {
    std::vector<Var<T>> params;
    double lr_scale = 1.0;
    double weight_decay = 0.0;
  };

  AdamW(std::vector<Group> groups, double lr, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : groups_(std::move(groups)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& g : groups_)
      for (auto& p : g.params) {
        m_.push_back(Tensor<T>::zeros(p->value.shape()));
        v_.push_back(Tensor<T>::zeros(p->value.shape()));
      }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    size_t slot = 0;
    for (auto& g : groups_) {
      const T lr = static_cast<T>(lr_ * g.lr_scale);
      const T wd = static_cast<T>(g.weight_decay);
      for (auto& p : g.params) {
        Tensor<T>& m = m_[slot];
        Tensor<T>& v = v_[slot];
        ++slot;
        if (!p->grad.defined()) continue;
        T* pv = p->value.data();
        const T* gr = p->grad.data();
        for (int64_t i = 0; i < p->value.numel(); ++i) {
          m[i] = static_cast<T>(beta1_) * m[i] + static_cast<T>(1.0 - beta1_) * gr[i];
          v[i] = static_cast<T>(beta2_) * v[i] + static_cast<T>(1.0 - beta2_) * gr[i] * gr[i];
          const T mhat = m[i] / static_cast<T>(bc1);
          const T vhat = v[i] / static_cast<T>(bc2);
          pv[i] -= lr * (mhat / (std::sqrt(vhat) + static_cast<T>(eps_)) + wd * pv[i]);
        }
      }
    }
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) p->zero_grad();
  }

 private:
  std::vector<Group> groups_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

// Exponential moving average of a parameter tree:
//   shadow <- decay * shadow + (1 - decay) * live
// Trees must match by name and shape; buffers are copied verbatim.
template <typename T>
void ema_update(const ParamStore<T>& live, ParamStore<T>& shadow, T decay) {
  const auto& a = live.entries();
  const auto& b = shadow.entries();
  if (a.size() != b.size())
    throw std::invalid_argument("ema_update: parameter tree size mismatch");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || a[i].second->value.shape() != b[i].second->value.shape())
      throw std::invalid_argument("ema_update: parameter tree mismatch at " + a[i].first);
    const T* src = a[i].second->value.data();
    T* dst = b[i].second->value.data();
    const int64_t n = a[i].second->value.numel();
    if (a[i].second->requires_grad) {
      for (int64_t k = 0; k < n; ++k) dst[k] = decay * dst[k] + (T(1) - decay) * src[k];
    } else {
      for (int64_t k = 0; k < n; ++k) dst[k] = src[k];
    }
  }
}

// Copies values from one tree into another (same matching rules as EMA).
template <typename T>
void copy_params(const ParamStore<T>& src, ParamStore<T>& dst) {
  const auto& a = src.entries();
  const auto& b = dst.entries();
  if (a.size() != b.size()) throw std::invalid_argument("copy_params: tree size mismatch");
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || a[i].second->value.shape() != b[i].second->value.shape())
      throw std::invalid_argument("copy_params: tree mismatch at " + a[i].first);
    std::memcpy(b[i].second->value.data(), a[i].second->value.data(),
                sizeof(T) * static_cast<size_t>(a[i].second->value.numel()));
  }
}

}  // namespace vidctl::nn
