#include <algorithm>
#include <cmath>
#include <cstring>

#include "vidctl/core/kernels.hpp"

namespace vidctl::core::kernels {

namespace {

// Bilinear sample with zeros outside the frame. Returns the sample and, if
// requested, its derivatives w.r.t. the continuous sample position.
template <typename T>
T sample_zero_pad(const T* plane, int64_t h, int64_t w, T sy, T sx, T* dsy, T* dsx) {
  const int64_t x0 = static_cast<int64_t>(std::floor(sx));
  const int64_t y0 = static_cast<int64_t>(std::floor(sy));
  const T fx = sx - static_cast<T>(x0);
  const T fy = sy - static_cast<T>(y0);
  auto px = [&](int64_t y, int64_t x) -> T {
    return (x >= 0 && x < w && y >= 0 && y < h) ? plane[y * w + x] : T(0);
  };
  const T v00 = px(y0, x0), v01 = px(y0, x0 + 1);
  const T v10 = px(y0 + 1, x0), v11 = px(y0 + 1, x0 + 1);
  if (dsx) *dsx = (T(1) - fy) * (v01 - v00) + fy * (v11 - v10);
  if (dsy) *dsy = (T(1) - fx) * (v10 - v00) + fx * (v11 - v01);
  return (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
}

template <typename T>
void scatter_zero_pad(T* plane, int64_t h, int64_t w, T sy, T sx, T g) {
  const int64_t x0 = static_cast<int64_t>(std::floor(sx));
  const int64_t y0 = static_cast<int64_t>(std::floor(sy));
  const T fx = sx - static_cast<T>(x0);
  const T fy = sy - static_cast<T>(y0);
  auto add = [&](int64_t y, int64_t x, T v) {
    if (x >= 0 && x < w && y >= 0 && y < h) plane[y * w + x] += v;
  };
  add(y0, x0, g * (T(1) - fy) * (T(1) - fx));
  add(y0, x0 + 1, g * (T(1) - fy) * fx);
  add(y0 + 1, x0, g * fy * (T(1) - fx));
  add(y0 + 1, x0 + 1, g * fy * fx);
}

}  // namespace

template <typename T>
void warp_bilinear_forward(const T* x, const T* flow, int64_t c, int64_t h, int64_t w, T* y) {
  const T* fx = flow;
  const T* fy = flow + h * w;
  const int64_t work = c * h * w;
  auto body = [&](int64_t ci) {
    const T* plane = x + ci * h * w;
    T* out = y + ci * h * w;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const int64_t p = i * w + j;
        out[p] = sample_zero_pad(plane, h, w, static_cast<T>(i) + fy[p],
                                 static_cast<T>(j) + fx[p], static_cast<T*>(nullptr),
                                 static_cast<T*>(nullptr));
      }
  };
  if (parallel_worthwhile(work)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  } else {
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  }
}

template <typename T>
void warp_bilinear_backward(const T* x, const T* flow, const T* dy, int64_t c, int64_t h,
                            int64_t w, T* dx, T* dflow) {
  const T* fx = flow;
  const T* fy = flow + h * w;
  // dx: channels are independent, scatter within one channel stays serial.
  if (dx) {
    auto body = [&](int64_t ci) {
      T* dplane = dx + ci * h * w;
      const T* g = dy + ci * h * w;
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const int64_t p = i * w + j;
          scatter_zero_pad(dplane, h, w, static_cast<T>(i) + fy[p], static_cast<T>(j) + fx[p],
                           g[p]);
        }
    };
    if (parallel_worthwhile(c * h * w)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
      for (int64_t ci = 0; ci < c; ++ci) body(ci);
    } else {
      for (int64_t ci = 0; ci < c; ++ci) body(ci);
    }
  }
  // dflow: one output position accumulates across channels (gather).
  if (dflow) {
    auto body = [&](int64_t p) {
      const int64_t i = p / w, j = p % w;
      T gx = T(0), gy = T(0);
      for (int64_t ci = 0; ci < c; ++ci) {
        T dsy, dsx;
        sample_zero_pad(x + ci * h * w, h, w, static_cast<T>(i) + fy[p], static_cast<T>(j) + fx[p],
                        &dsy, &dsx);
        gx += dy[ci * h * w + p] * dsx;
        gy += dy[ci * h * w + p] * dsy;
      }
      dflow[p] = gx;
      dflow[h * w + p] = gy;
    };
    if (parallel_worthwhile(c * h * w)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
      for (int64_t p = 0; p < h * w; ++p) body(p);
    } else {
      for (int64_t p = 0; p < h * w; ++p) body(p);
    }
  }
}

template <typename T>
void resize_bilinear_forward(const T* x, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                             T* y) {
  const T sy = static_cast<T>(h) / static_cast<T>(oh);
  const T sx = static_cast<T>(w) / static_cast<T>(ow);
  auto body = [&](int64_t ci) {
    const T* plane = x + ci * h * w;
    T* out = y + ci * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      T fy = (static_cast<T>(i) + T(0.5)) * sy - T(0.5);
      fy = std::min(std::max(fy, T(0)), static_cast<T>(h - 1));
      const int64_t y0 = static_cast<int64_t>(fy);
      const int64_t y1 = std::min(y0 + 1, h - 1);
      const T wy = fy - static_cast<T>(y0);
      for (int64_t j = 0; j < ow; ++j) {
        T gx = (static_cast<T>(j) + T(0.5)) * sx - T(0.5);
        gx = std::min(std::max(gx, T(0)), static_cast<T>(w - 1));
        const int64_t x0 = static_cast<int64_t>(gx);
        const int64_t x1 = std::min(x0 + 1, w - 1);
        const T wx = gx - static_cast<T>(x0);
        out[i * ow + j] = (T(1) - wy) * ((T(1) - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
                          wy * ((T(1) - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
      }
    }
  };
  if (parallel_worthwhile(c * oh * ow)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  } else {
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  }
}

template <typename T>
void resize_bilinear_backward(const T* dy, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                              T* dx) {
  const T sy = static_cast<T>(h) / static_cast<T>(oh);
  const T sx = static_cast<T>(w) / static_cast<T>(ow);
  auto body = [&](int64_t ci) {
    const T* g = dy + ci * oh * ow;
    T* dplane = dx + ci * h * w;
    for (int64_t i = 0; i < oh; ++i) {
      T fy = (static_cast<T>(i) + T(0.5)) * sy - T(0.5);
      fy = std::min(std::max(fy, T(0)), static_cast<T>(h - 1));
      const int64_t y0 = static_cast<int64_t>(fy);
      const int64_t y1 = std::min(y0 + 1, h - 1);
      const T wy = fy - static_cast<T>(y0);
      for (int64_t j = 0; j < ow; ++j) {
        T gx = (static_cast<T>(j) + T(0.5)) * sx - T(0.5);
        gx = std::min(std::max(gx, T(0)), static_cast<T>(w - 1));
        const int64_t x0 = static_cast<int64_t>(gx);
        const int64_t x1 = std::min(x0 + 1, w - 1);
        const T wx = gx - static_cast<T>(x0);
        const T gg = g[i * ow + j];
        dplane[y0 * w + x0] += gg * (T(1) - wy) * (T(1) - wx);
        dplane[y0 * w + x1] += gg * (T(1) - wy) * wx;
        dplane[y1 * w + x0] += gg * wy * (T(1) - wx);
        dplane[y1 * w + x1] += gg * wy * wx;
      }
    }
  };
  if (parallel_worthwhile(c * oh * ow)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  } else {
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  }
}

template <typename T>
void resize_nearest_forward(const T* x, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                            T* y) {
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  auto body = [&](int64_t ci) {
    const T* plane = x + ci * h * w;
    T* out = y + ci * oh * ow;
    for (int64_t i = 0; i < oh; ++i) {
      const int64_t yi = std::min(static_cast<int64_t>(i * sy), h - 1);
      for (int64_t j = 0; j < ow; ++j) {
        const int64_t xi = std::min(static_cast<int64_t>(j * sx), w - 1);
        out[i * ow + j] = plane[yi * w + xi];
      }
    }
  };
  if (parallel_worthwhile(c * oh * ow)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  } else {
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  }
}

template <typename T>
void resize_nearest_backward(const T* dy, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                             T* dx) {
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  auto body = [&](int64_t ci) {
    const T* g = dy + ci * oh * ow;
    T* dplane = dx + ci * h * w;
    for (int64_t i = 0; i < oh; ++i) {
      const int64_t yi = std::min(static_cast<int64_t>(i * sy), h - 1);
      for (int64_t j = 0; j < ow; ++j) {
        const int64_t xi = std::min(static_cast<int64_t>(j * sx), w - 1);
        dplane[yi * w + xi] += g[i * ow + j];
      }
    }
  };
  if (parallel_worthwhile(c * oh * ow)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  } else {
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  }
}

#define VIDCTL_INSTANTIATE_IMAGE(T)                                                            \
  template void warp_bilinear_forward<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);   \
  template void warp_bilinear_backward<T>(const T*, const T*, const T*, int64_t, int64_t,      \
                                          int64_t, T*, T*);                                    \
  template void resize_bilinear_forward<T>(const T*, int64_t, int64_t, int64_t, int64_t,       \
                                           int64_t, T*);                                       \
  template void resize_bilinear_backward<T>(const T*, int64_t, int64_t, int64_t, int64_t,      \
                                            int64_t, T*);                                      \
  template void resize_nearest_forward<T>(const T*, int64_t, int64_t, int64_t, int64_t,        \
                                          int64_t, T*);                                        \
  template void resize_nearest_backward<T>(const T*, int64_t, int64_t, int64_t, int64_t,       \
                                           int64_t, T*);

VIDCTL_INSTANTIATE_IMAGE(float)
VIDCTL_INSTANTIATE_IMAGE(double)

}  // namespace vidctl::core::kernels
