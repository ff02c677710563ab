#pragma once

#include <cmath>

#include "vidctl/core/ops.hpp"

namespace vidctl::nn {

// SSIM with the standard 11x11 Gaussian window (sigma 1.5) and stabilizers
// C1 = (0.01 L)^2, C2 = (0.03 L)^2 on a unit dynamic range. Windows are
// applied per channel without padding (valid region only).

template <typename T>
core::Tensor<T> gaussian_window(int64_t channels, int size = 11, double sigma = 1.5) {
  std::vector<T> k1(size);
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - (size - 1) / 2.0;
    const double v = std::exp(-d * d / (2 * sigma * sigma));
    k1[i] = static_cast<T>(v);
    sum += v;
  }
  for (auto& v : k1) v = static_cast<T>(v / sum);
  core::Tensor<T> w({channels, 1, size, size});
  for (int64_t c = 0; c < channels; ++c)
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) w.at(c, int64_t(0), int64_t(i), int64_t(j)) = k1[i] * k1[j];
  return w;
}

// Mean SSIM over all valid windows of x and y, both [N, C, H, W] in [0, 1].
template <typename T>
core::Var<T> ssim(const core::Var<T>& x, const core::Var<T>& y, int window = 11,
                  double sigma = 1.5) {
  namespace ops = core::ops;
  const int64_t c = x->value.dim(1);
  auto w = core::constant(gaussian_window<T>(c, window, sigma));
  const T c1 = static_cast<T>(0.01 * 0.01);
  const T c2 = static_cast<T>(0.03 * 0.03);
  auto blur = [&](const core::Var<T>& v) {
    return ops::conv2d(v, w, core::Var<T>(), 1, 0, c);
  };
  auto mu_x = blur(x);
  auto mu_y = blur(y);
  auto mu_xx = ops::mul(mu_x, mu_x);
  auto mu_yy = ops::mul(mu_y, mu_y);
  auto mu_xy = ops::mul(mu_x, mu_y);
  auto sigma_x = ops::sub(blur(ops::mul(x, x)), mu_xx);
  auto sigma_y = ops::sub(blur(ops::mul(y, y)), mu_yy);
  auto sigma_xy = ops::sub(blur(ops::mul(x, y)), mu_xy);
  auto num = ops::mul(ops::add_scalar(ops::mul_scalar(mu_xy, T(2)), c1),
                      ops::add_scalar(ops::mul_scalar(sigma_xy, T(2)), c2));
  auto den = ops::mul(ops::add_scalar(ops::add(mu_xx, mu_yy), c1),
                      ops::add_scalar(ops::add(sigma_x, sigma_y), c2));
  return ops::mean_all(ops::div(num, den));
}

// Value-only SSIM between two tensors.
template <typename T>
double ssim_value(const core::Tensor<T>& x, const core::Tensor<T>& y) {
  core::NoGradGuard ng;
  return static_cast<double>(ssim<T>(core::constant(x), core::constant(y))->value[0]);
}

// Mean absolute error in [0, 255] pixel scale, the surrogate validation L1.
template <typename T>
double l1_255(const core::Tensor<T>& x, const core::Tensor<T>& y) {
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i)
    acc += std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i]));
  return 255.0 * acc / static_cast<double>(x.numel());
}

}  // namespace vidctl::nn
