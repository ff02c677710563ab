#include <cmath>

#include "vidctl/core/kernels.hpp"

namespace vidctl::core::kernels {

namespace {

template <typename T>
void group_stats(const T* x, int64_t cs, T eps, T* mean, T* rstd) {
  T sum = T(0);
  for (int64_t i = 0; i < cs; ++i) sum += x[i];
  const T mu = sum / static_cast<T>(cs);
  T var = T(0);
  for (int64_t i = 0; i < cs; ++i) {
    const T d = x[i] - mu;
    var += d * d;
  }
  var /= static_cast<T>(cs);
  *mean = mu;
  *rstd = T(1) / std::sqrt(var + eps);
}

// Per (n, group) normalization. cs = channels_per_group * spatial.
template <typename T>
void gn_forward_one(const T* x, int64_t cs, T eps, T* y, T* mean, T* rstd) {
  group_stats(x, cs, eps, mean, rstd);
  const T mu = *mean, rs = *rstd;
  for (int64_t i = 0; i < cs; ++i) y[i] = (x[i] - mu) * rs;
}

// dL/dx for y = (x - mu) * rstd over one group:
//   dx = rstd * (dy - mean(dy) - xhat * mean(dy * xhat))
template <typename T>
void gn_backward_one(const T* x, const T* dy, T mean, T rstd, int64_t cs, T* dx) {
  T sum_dy = T(0), sum_dy_xhat = T(0);
  for (int64_t i = 0; i < cs; ++i) {
    const T xhat = (x[i] - mean) * rstd;
    sum_dy += dy[i];
    sum_dy_xhat += dy[i] * xhat;
  }
  const T m_dy = sum_dy / static_cast<T>(cs);
  const T m_dy_xhat = sum_dy_xhat / static_cast<T>(cs);
  for (int64_t i = 0; i < cs; ++i) {
    const T xhat = (x[i] - mean) * rstd;
    dx[i] = rstd * (dy[i] - m_dy - xhat * m_dy_xhat);
  }
}

template <typename T>
void softmax_one(const T* x, int64_t axis, int64_t inner, T* y) {
  for (int64_t in = 0; in < inner; ++in) {
    T mx = x[in];
    for (int64_t a = 1; a < axis; ++a) mx = std::max(mx, x[a * inner + in]);
    T denom = T(0);
    for (int64_t a = 0; a < axis; ++a) {
      const T e = std::exp(x[a * inner + in] - mx);
      y[a * inner + in] = e;
      denom += e;
    }
    const T inv = T(1) / denom;
    for (int64_t a = 0; a < axis; ++a) y[a * inner + in] *= inv;
  }
}

template <typename T>
void softmax_backward_one(const T* y, const T* dy, int64_t axis, int64_t inner, T* dx) {
  for (int64_t in = 0; in < inner; ++in) {
    T dot = T(0);
    for (int64_t a = 0; a < axis; ++a) dot += y[a * inner + in] * dy[a * inner + in];
    for (int64_t a = 0; a < axis; ++a)
      dx[a * inner + in] = y[a * inner + in] * (dy[a * inner + in] - dot);
  }
}

}  // namespace

template <typename T>
void group_norm_forward(const T* x, int64_t n, int64_t c, int64_t s, int64_t groups, T eps, T* y,
                        T* mean, T* rstd) {
  const int64_t cs = (c / groups) * s;
  const int64_t total = n * groups;
  if (parallel_worthwhile(total * cs)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t g = 0; g < total; ++g)
      gn_forward_one(x + g * cs, cs, eps, y + g * cs, mean + g, rstd + g);
  } else {
    for (int64_t g = 0; g < total; ++g)
      gn_forward_one(x + g * cs, cs, eps, y + g * cs, mean + g, rstd + g);
  }
}

template <typename T>
void group_norm_backward(const T* x, const T* dy, const T* mean, const T* rstd, int64_t n,
                         int64_t c, int64_t s, int64_t groups, T* dx) {
  const int64_t cs = (c / groups) * s;
  const int64_t total = n * groups;
  if (parallel_worthwhile(total * cs)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t g = 0; g < total; ++g)
      gn_backward_one(x + g * cs, dy + g * cs, mean[g], rstd[g], cs, dx + g * cs);
  } else {
    for (int64_t g = 0; g < total; ++g)
      gn_backward_one(x + g * cs, dy + g * cs, mean[g], rstd[g], cs, dx + g * cs);
  }
}

template <typename T>
void softmax_forward(const T* x, int64_t outer, int64_t axis, int64_t inner, T* y) {
  if (parallel_worthwhile(outer * axis * inner)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t o = 0; o < outer; ++o)
      softmax_one(x + o * axis * inner, axis, inner, y + o * axis * inner);
  } else {
    for (int64_t o = 0; o < outer; ++o)
      softmax_one(x + o * axis * inner, axis, inner, y + o * axis * inner);
  }
}

template <typename T>
void softmax_backward(const T* y, const T* dy, int64_t outer, int64_t axis, int64_t inner, T* dx) {
  if (parallel_worthwhile(outer * axis * inner)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t o = 0; o < outer; ++o)
      softmax_backward_one(y + o * axis * inner, dy + o * axis * inner, axis, inner,
                           dx + o * axis * inner);
  } else {
    for (int64_t o = 0; o < outer; ++o)
      softmax_backward_one(y + o * axis * inner, dy + o * axis * inner, axis, inner,
                           dx + o * axis * inner);
  }
}

#define VIDCTL_INSTANTIATE_NORM(T)                                                             \
  template void group_norm_forward<T>(const T*, int64_t, int64_t, int64_t, int64_t, T, T*, T*, \
                                      T*);                                                     \
  template void group_norm_backward<T>(const T*, const T*, const T*, const T*, int64_t,        \
                                       int64_t, int64_t, int64_t, T*);                         \
  template void softmax_forward<T>(const T*, int64_t, int64_t, int64_t, T*);                   \
  template void softmax_backward<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);

VIDCTL_INSTANTIATE_NORM(float)
VIDCTL_INSTANTIATE_NORM(double)

}  // namespace vidctl::core::kernels
