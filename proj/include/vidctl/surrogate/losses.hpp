#pragma once

#include <vector>

#include "vidctl/codec/bridge.hpp"
#include "vidctl/core/fft_ops.hpp"
#include "vidctl/nn/image_metrics.hpp"
#include "vidctl/surrogate/model.hpp"

namespace vidctl::surrogate {

// Correlation loss 1 - rho between a prediction and a constant target over
// all elements; eps stabilizes the standard deviations. Zero-variance inputs
// (either side) yield the no-credit constant 1 with no gradient.
template <typename T>
core::Var<T> correlation_loss(const core::Var<T>& pred, const core::Tensor<T>& target,
                              T eps = T(1e-8)) {
  namespace ops = core::ops;
  core::check_same_shape(pred->value, target, "correlation_loss");
  const int64_t n = target.numel();
  double ty_mean = 0;
  for (int64_t i = 0; i < n; ++i) ty_mean += target[i];
  ty_mean /= static_cast<double>(n);
  double ty_var = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = target[i] - ty_mean;
    ty_var += d * d;
  }
  const double ty_std = std::sqrt(ty_var / n);

  double tx_mean = 0;
  for (int64_t i = 0; i < n; ++i) tx_mean += pred->value[i];
  tx_mean /= static_cast<double>(n);
  double tx_var = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pred->value[i] - tx_mean;
    tx_var += d * d;
  }
  const double tx_std = std::sqrt(tx_var / n);
  if (tx_std < 1e-12 || ty_std < 1e-12)
    return core::constant(core::Tensor<T>::scalar(T(1)));

  core::Tensor<T> yc(target.shape());
  for (int64_t i = 0; i < n; ++i) yc[i] = target[i] - static_cast<T>(ty_mean);

  auto flat = ops::reshape(pred, {n});
  auto xm = ops::mean_all(flat);
  auto xc = ops::sub_bcast(flat, xm);
  auto cov = ops::mean_all(ops::mul(xc, core::constant(yc.reshaped({n}))));
  auto stdx = ops::add_scalar(ops::sqrt(ops::mean_all(ops::square(xc))), eps);
  const T stdy = static_cast<T>(ty_std) + eps;
  auto rho = ops::mul_scalar(ops::div(cov, stdx), T(1) / stdy);
  return ops::add_scalar(ops::neg(rho), T(1));
}

struct SurrogateLossReport {
  double total = 0, rho_v = 0, ssim = 0, ff = 0, rho_f = 0, l1 = 0;
};

template <typename T>
struct SurrogateLoss {
  core::Var<T> total;
  SurrogateLossReport report;
};

// L_s = a_rho_v (1-rho_V) + a_ssim (1-SSIM) + a_ff FFL
//     + a_rho_f (1-rho_f) + a_l1 L1(log10 sizes), batch-concatenated.
template <typename T>
SurrogateLoss<T> surrogate_loss(const std::vector<typename SurrogateNet<T>::Output>& preds,
                                const std::vector<const codec::CodedClip*>& truths,
                                const SurrogateConfig& cfg) {
  namespace ops = core::ops;
  if (preds.empty() || preds.size() != truths.size())
    throw util::ContractError("surrogate_loss: batch mismatch");

  std::vector<core::Var<T>> frame_flat, size_parts, ssim_parts, ff_parts;
  std::vector<T> target_pixels, target_logs;
  for (size_t b = 0; b < preds.size(); ++b) {
    const auto& truth = *truths[b];
    for (int64_t s : truth.file_sizes)
      if (s <= 0) throw util::ContractError("surrogate_loss: nonpositive true size");
    core::Tensor<T> hat = truth.frames_hat.template cast<T>();
    frame_flat.push_back(ops::reshape(preds[b].frames, {preds[b].frames->value.numel()}));
    for (int64_t i = 0; i < hat.numel(); ++i) target_pixels.push_back(hat[i]);
    size_parts.push_back(preds[b].log_sizes);
    for (int64_t s : truth.file_sizes)
      target_logs.push_back(static_cast<T>(std::log10(static_cast<double>(s))));
    auto hat_var = core::constant(hat);
    ssim_parts.push_back(ops::add_scalar(ops::neg(nn::ssim(preds[b].frames, hat_var)), T(1)));
    ff_parts.push_back(core::ops::focal_frequency_loss(preds[b].frames, hat, T(1)));
  }
  auto pred_pixels = ops::concat(frame_flat, 0);
  auto pred_logs = ops::concat(size_parts, 0);
  core::Tensor<T> tp({static_cast<int64_t>(target_pixels.size())});
  std::copy(target_pixels.begin(), target_pixels.end(), tp.data());
  core::Tensor<T> tl({static_cast<int64_t>(target_logs.size())});
  std::copy(target_logs.begin(), target_logs.end(), tl.data());

  const T inv_b = T(1) / static_cast<T>(preds.size());
  auto mean_of = [&](std::vector<core::Var<T>> parts) {
    return ops::mul_scalar(ops::sum_all(ops::concat(parts, 0)), inv_b);
  };

  auto l_rho_v = correlation_loss(pred_pixels, tp);
  auto l_ssim = mean_of(ssim_parts);
  auto l_ff = mean_of(ff_parts);
  auto l_rho_f = correlation_loss(pred_logs, tl);
  auto l_l1 = ops::mean_all(ops::abs(ops::sub(pred_logs, core::constant(tl))));

  auto total = ops::mul_scalar(l_rho_v, static_cast<T>(cfg.a_rho_v));
  total = ops::add(total, ops::mul_scalar(l_ssim, static_cast<T>(cfg.a_ssim)));
  total = ops::add(total, ops::mul_scalar(l_ff, static_cast<T>(cfg.a_ff)));
  total = ops::add(total, ops::mul_scalar(l_rho_f, static_cast<T>(cfg.a_rho_f)));
  total = ops::add(total, ops::mul_scalar(l_l1, static_cast<T>(cfg.a_l1)));

  SurrogateLoss<T> out;
  out.total = total;
  out.report = {static_cast<double>(total->value[0]), static_cast<double>(l_rho_v->value[0]),
                static_cast<double>(l_ssim->value[0]), static_cast<double>(l_ff->value[0]),
                static_cast<double>(l_rho_f->value[0]), static_cast<double>(l_l1->value[0])};
  return out;
}

}  // namespace vidctl::surrogate
