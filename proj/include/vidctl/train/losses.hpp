#pragma once

#include <cmath>

#include "vidctl/core/ops.hpp"
#include "vidctl/util/errors.hpp"
#include "vidctl/vision/downstream.hpp"

namespace vidctl::train {

struct ControlLossWeights {
  double a_b = 6.0, a_p = 2.0, a_r = 1.0;
  double eps_b = 0.02;  // == eps_p (supplement sets them equal)
  double eps_p = 0.02;
  double eps_r = 0.05;

  void validate() const {
    if (a_b < 0 || a_p < 0 || a_r < 0)
      throw util::ContractError("ControlLossWeights: alphas must be nonnegative");
    if (!(eps_b < eps_r))
      throw util::ContractError("ControlLossWeights: requires eps_b < eps_r");
  }
};

// b = 8 * sum(10^log_sizes) * fps / (T * stride); differentiable in the log
// sizes, result in bit/s as a scalar var.
template <typename T>
core::Var<T> bandwidth_from_log_sizes(const core::Var<T>& log_sizes, double fps, int stride) {
  namespace ops = core::ops;
  for (int64_t i = 0; i < log_sizes->value.numel(); ++i)
    if (!std::isfinite(static_cast<double>(log_sizes->value[i])))
      throw util::ContractError("bandwidth_from_log_sizes: non-finite input");
  if (fps <= 0 || stride < 1)
    throw util::ContractError("bandwidth_from_log_sizes: bad fps or stride");
  const int64_t t = log_sizes->value.numel();
  auto bytes = ops::exp(ops::mul_scalar(log_sizes, static_cast<T>(std::log(10.0))));
  const T scale = static_cast<T>(8.0 * fps / (static_cast<double>(t) * stride));
  return ops::mul_scalar(ops::sum_all(bytes), scale);
}

// Plain-number variant for per-frame byte counts.
double bandwidth_from_bytes(const std::vector<int64_t>& sizes, double fps, int stride);
double bandwidth_from_bytes(const std::vector<double>& sizes, double fps, int stride);

// L_b = max(0, b_tilde - b (1 - eps)); subgradient 1 above the knee, 0 below.
template <typename T>
core::Var<T> bandwidth_loss(const core::Var<T>& b_tilde, double b, double eps_p) {
  namespace ops = core::ops;
  if (b <= 0) throw util::ContractError("bandwidth_loss: b must be positive");
  auto shifted = ops::add_scalar(b_tilde, static_cast<T>(-b * (1.0 - eps_p)));
  return ops::leaky_relu(shifted, T(0));
}

// L_r = |min(0, b_tilde - b (1 - eps_r))| = max(0, b (1 - eps_r) - b_tilde).
template <typename T>
core::Var<T> bandwidth_regularizer(const core::Var<T>& b_tilde, double b, double eps_r) {
  namespace ops = core::ops;
  if (b <= 0) throw util::ContractError("bandwidth_regularizer: b must be positive");
  auto shifted = ops::add_scalar(ops::neg(b_tilde), static_cast<T>(b * (1.0 - eps_r)));
  return ops::leaky_relu(shifted, T(0));
}

// Heaviside gate H(b - b_tilde (1 + eps_p)) with H(0) = 1; treated as a
// constant factor, no gradient flows through it.
inline double heaviside_gate(double b, double b_tilde, double eps_p) {
  return b - b_tilde * (1.0 + eps_p) >= 0.0 ? 1.0 : 0.0;
}

// Task-specific distillation loss against the (detached) pseudo label.
// Flow: gate * mean |O - O~| over pixels and both components. Segmentation:
// gate * mean over pixels of KL(pseudo || predicted) between per-pixel class
// distributions.
template <typename T>
core::Var<T> performance_loss(const core::Var<T>& pred, const core::Tensor<T>& pseudo,
                              double gate, vision::Task task) {
  namespace ops = core::ops;
  core::check_same_shape(pred->value, pseudo, "performance_loss");
  if (gate == 0.0) return core::constant(core::Tensor<T>::scalar(T(0)));
  if (task == vision::Task::Flow) {
    auto err = ops::mean_all(ops::abs(ops::sub(pred, core::constant(pseudo))));
    return ops::mul_scalar(err, static_cast<T>(gate));
  }
  if (task != vision::Task::Segmentation)
    throw util::ContractError("performance_loss: unknown task");
  // per-pixel categorical KL(p || q) with p from the pseudo logits
  const int64_t t = pseudo.dim(0), c = pseudo.dim(1);
  const int64_t hw = pseudo.dim(2) * pseudo.dim(3);
  core::Tensor<T> p(pseudo.shape()), plogp(pseudo.shape());
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t px = 0; px < hw; ++px) {
      T mx = pseudo[(ti * c) * hw + px];
      for (int64_t ci = 1; ci < c; ++ci)
        mx = std::max(mx, pseudo[(ti * c + ci) * hw + px]);
      T denom = T(0);
      for (int64_t ci = 0; ci < c; ++ci)
        denom += std::exp(pseudo[(ti * c + ci) * hw + px] - mx);
      const T logz = std::log(denom) + mx;
      for (int64_t ci = 0; ci < c; ++ci) {
        const int64_t at = (ti * c + ci) * hw + px;
        const T logp = pseudo[at] - logz;
        p[at] = std::exp(logp);
        plogp[at] = p[at] * logp;
      }
    }
  auto logq = ops::log(ops::add_scalar(ops::softmax(pred, 1), T(1e-12)));
  auto cross = ops::mul(core::constant(p), logq);
  auto kl = ops::sub(core::constant(plogp), cross);
  const T norm = static_cast<T>(gate) / static_cast<T>(t * hw);
  return ops::mul_scalar(ops::sum_all(kl), norm);
}

struct ControlLossReport {
  double total = 0, l_b = 0, l_p = 0, l_r = 0;
};

// L_c = a_b L_b + a_p L_p + a_r L_r. Components must be nonnegative.
template <typename T>
core::Var<T> control_loss(const core::Var<T>& l_b, const core::Var<T>& l_p,
                          const core::Var<T>& l_r, const ControlLossWeights& w,
                          ControlLossReport* report = nullptr) {
  namespace ops = core::ops;
  w.validate();
  for (const auto& v : {l_b, l_p, l_r})
    if (v->value[0] < T(0))
      throw util::ContractError("control_loss: negative loss component");
  auto total = ops::mul_scalar(l_b, static_cast<T>(w.a_b));
  total = ops::add(total, ops::mul_scalar(l_p, static_cast<T>(w.a_p)));
  total = ops::add(total, ops::mul_scalar(l_r, static_cast<T>(w.a_r)));
  if (report)
    *report = {static_cast<double>(total->value[0]), static_cast<double>(l_b->value[0]),
               static_cast<double>(l_p->value[0]), static_cast<double>(l_r->value[0])};
  return total;
}

// Log-uniform bandwidth condition sampler over [lo, hi] bit/s.
struct BandwidthSampler {
  double lo = 30e3, hi = 900e3;

  double sample(core::Rng& rng) const {
    if (!(lo > 0 && hi > lo)) throw util::ContractError("BandwidthSampler: bad range");
    const double u = rng.uniform(std::log10(lo), std::log10(hi));
    return std::pow(10.0, u);
  }
};

}  // namespace vidctl::train
