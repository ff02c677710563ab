#include <cstring>

#include "vidctl/core/kernels.hpp"

namespace vidctl::core::kernels {

namespace {

inline int64_t out_extent(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

// im2col row loop body shared by ref/omp. Each (c, ky, kx) triple owns one
// col row, so rows can be filled independently.
template <typename T>
void im2col2d_row(const T* x, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                  int64_t ph, int64_t pw, int64_t row, T* col) {
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(w, kw, sw, pw);
  const int64_t kx = row % kw;
  const int64_t ky = (row / kw) % kh;
  const int64_t c = row / (kw * kh);
  const T* xc = x + c * h * w;
  T* out = col + row * oh * ow;
  for (int64_t oy = 0; oy < oh; ++oy) {
    const int64_t iy = oy * sh - ph + ky;
    if (iy < 0 || iy >= h) {
      std::memset(out + oy * ow, 0, sizeof(T) * static_cast<size_t>(ow));
      continue;
    }
    const T* xrow = xc + iy * w;
    for (int64_t ox = 0; ox < ow; ++ox) {
      const int64_t ix = ox * sw - pw + kx;
      out[oy * ow + ox] = (ix >= 0 && ix < w) ? xrow[ix] : T(0);
    }
  }
}

// col2im accumulated per input pixel (gather form): x[c,y,x] sums every col
// entry whose sliding window covers it. Each input pixel is written once.
// Kernel offsets step by the stride so the loop body stays division-free.
template <typename T>
void col2im2d_pixel(const T* col, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
                    int64_t sw, int64_t ph, int64_t pw, int64_t c_idx, int64_t iy, int64_t ix,
                    T* x) {
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(w, kw, sw, pw);
  // ky walks the residue class of (iy + ph) mod sh; the matching output row
  // decrements by one per step, so the loop body stays division-free
  const int64_t ty0 = iy + ph;
  const int64_t tx0 = ix + pw;
  const int64_t ky0 = ty0 % sh;
  const int64_t kx0 = tx0 % sw;
  T acc = T(0);
  int64_t oy = (ty0 - ky0) / sh;
  for (int64_t ky = ky0; ky < kh; ky += sh, --oy) {
    if (oy < 0) break;
    if (oy >= oh) continue;
    const int64_t row_base = (c_idx * kh + ky) * kw;
    int64_t ox = (tx0 - kx0) / sw;
    for (int64_t kx = kx0; kx < kw; kx += sw, --ox) {
      if (ox < 0) break;
      if (ox >= ow) continue;
      acc += col[(row_base + kx) * oh * ow + oy * ow + ox];
    }
  }
  x[(c_idx * h + iy) * w + ix] = acc;
}

template <typename T>
void im2col3d_row(const T* x, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh, int64_t kw,
                  int64_t sd, int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw,
                  int64_t row, T* col) {
  const int64_t od = out_extent(d, kd, sd, pd);
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(w, kw, sw, pw);
  const int64_t kx = row % kw;
  const int64_t ky = (row / kw) % kh;
  const int64_t kz = (row / (kw * kh)) % kd;
  const int64_t c = row / (kw * kh * kd);
  const T* xc = x + c * d * h * w;
  T* out = col + row * od * oh * ow;
  for (int64_t oz = 0; oz < od; ++oz) {
    const int64_t iz = oz * sd - pd + kz;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const int64_t iy = oy * sh - ph + ky;
      T* orow = out + (oz * oh + oy) * ow;
      if (iz < 0 || iz >= d || iy < 0 || iy >= h) {
        std::memset(orow, 0, sizeof(T) * static_cast<size_t>(ow));
        continue;
      }
      const T* xrow = xc + (iz * h + iy) * w;
      for (int64_t ox = 0; ox < ow; ++ox) {
        const int64_t ix = ox * sw - pw + kx;
        orow[ox] = (ix >= 0 && ix < w) ? xrow[ix] : T(0);
      }
    }
  }
}

template <typename T>
void col2im3d_pixel(const T* col, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
                    int64_t kw, int64_t sd, int64_t sh, int64_t sw, int64_t pd, int64_t ph,
                    int64_t pw, int64_t c_idx, int64_t iz, int64_t iy, int64_t ix, T* x) {
  const int64_t od = out_extent(d, kd, sd, pd);
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(w, kw, sw, pw);
  const int64_t tz0 = iz + pd, ty0 = iy + ph, tx0 = ix + pw;
  const int64_t kz0 = tz0 % sd, ky0 = ty0 % sh, kx0 = tx0 % sw;
  T acc = T(0);
  int64_t oz = (tz0 - kz0) / sd;
  for (int64_t kz = kz0; kz < kd; kz += sd, --oz) {
    if (oz < 0) break;
    if (oz >= od) continue;
    int64_t oy = (ty0 - ky0) / sh;
    for (int64_t ky = ky0; ky < kh; ky += sh, --oy) {
      if (oy < 0) break;
      if (oy >= oh) continue;
      const int64_t row_base = ((c_idx * kd + kz) * kh + ky) * kw;
      int64_t ox = (tx0 - kx0) / sw;
      for (int64_t kx = kx0; kx < kw; kx += sw, --ox) {
        if (ox < 0) break;
        if (ox >= ow) continue;
        acc += col[(((row_base + kx) * od + oz) * oh + oy) * ow + ox];
      }
    }
  }
  x[((c_idx * d + iz) * h + iy) * w + ix] = acc;
}

}  // namespace

namespace ref {
template <typename T>
void im2col2d(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* col) {
  for (int64_t row = 0; row < c * kh * kw; ++row)
    im2col2d_row(x, h, w, kh, kw, sh, sw, ph, pw, row, col);
}
template <typename T>
void col2im2d(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* x) {
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t iy = 0; iy < h; ++iy)
      for (int64_t ix = 0; ix < w; ++ix)
        col2im2d_pixel(col, h, w, kh, kw, sh, sw, ph, pw, ci, iy, ix, x);
}
}  // namespace ref

namespace omp {
template <typename T>
void im2col2d(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* col) {
  const int64_t rows = c * kh * kw;
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (int64_t row = 0; row < rows; ++row)
    im2col2d_row(x, h, w, kh, kw, sh, sw, ph, pw, row, col);
}
template <typename T>
void col2im2d(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* x) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (int64_t i = 0; i < c * h * w; ++i) {
    const int64_t ix = i % w;
    const int64_t iy = (i / w) % h;
    const int64_t ci = i / (w * h);
    col2im2d_pixel(col, h, w, kh, kw, sh, sw, ph, pw, ci, iy, ix, x);
  }
}
}  // namespace omp

template <typename T>
void im2col2d(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* col) {
  if (parallel_worthwhile(c * kh * kw * h * w))
    omp::im2col2d(x, c, h, w, kh, kw, sh, sw, ph, pw, col);
  else
    ref::im2col2d(x, c, h, w, kh, kw, sh, sw, ph, pw, col);
}
template <typename T>
void col2im2d(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* x) {
  if (parallel_worthwhile(c * kh * kw * h * w))
    omp::col2im2d(col, c, h, w, kh, kw, sh, sw, ph, pw, x);
  else
    ref::col2im2d(col, c, h, w, kh, kw, sh, sw, ph, pw, x);
}

// 3D variants dispatch straight to an OMP-or-serial loop; the row body is
// shared so both paths agree exactly.
template <typename T>
void im2col3d(const T* x, int64_t c, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
              int64_t kw, int64_t sd, int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw,
              T* col) {
  const int64_t rows = c * kd * kh * kw;
  if (parallel_worthwhile(rows * d * h * w)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t row = 0; row < rows; ++row)
      im2col3d_row(x, d, h, w, kd, kh, kw, sd, sh, sw, pd, ph, pw, row, col);
  } else {
    for (int64_t row = 0; row < rows; ++row)
      im2col3d_row(x, d, h, w, kd, kh, kw, sd, sh, sw, pd, ph, pw, row, col);
  }
}
template <typename T>
void col2im3d(const T* col, int64_t c, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
              int64_t kw, int64_t sd, int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw,
              T* x) {
  const int64_t count = c * d * h * w;
  if (parallel_worthwhile(count * kd * kh * kw)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t i = 0; i < count; ++i) {
      const int64_t ix = i % w;
      const int64_t iy = (i / w) % h;
      const int64_t iz = (i / (w * h)) % d;
      const int64_t ci = i / (w * h * d);
      col2im3d_pixel(col, d, h, w, kd, kh, kw, sd, sh, sw, pd, ph, pw, ci, iz, iy, ix, x);
    }
  } else {
    for (int64_t i = 0; i < count; ++i) {
      const int64_t ix = i % w;
      const int64_t iy = (i / w) % h;
      const int64_t iz = (i / (w * h)) % d;
      const int64_t ci = i / (w * h * d);
      col2im3d_pixel(col, d, h, w, kd, kh, kw, sd, sh, sw, pd, ph, pw, ci, iz, iy, ix, x);
    }
  }
}

template <typename T>
void depthwise2d_forward(const T* x, const T* w, int64_t u, int64_t c, int64_t h, int64_t wd,
                         int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph, int64_t pw,
                         T* y) {
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(wd, kw, sw, pw);
  auto body = [&](int64_t ui) {
    const T* plane = x + ui * h * wd;
    const T* kern = w + (ui % c) * kh * kw;
    T* out = y + ui * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        const int64_t iy0 = oy * sh - ph, ix0 = ox * sw - pw;
        for (int64_t ky = 0; ky < kh; ++ky) {
          const int64_t iy = iy0 + ky;
          if (iy < 0 || iy >= h) continue;
          const T* xrow = plane + iy * wd;
          const T* krow = kern + ky * kw;
          for (int64_t kx = 0; kx < kw; ++kx) {
            const int64_t ix = ix0 + kx;
            if (ix >= 0 && ix < wd) acc += krow[kx] * xrow[ix];
          }
        }
        out[oy * ow + ox] = acc;
      }
  };
  if (parallel_worthwhile(u * oh * ow * kh * kw)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ui = 0; ui < u; ++ui) body(ui);
  } else {
    for (int64_t ui = 0; ui < u; ++ui) body(ui);
  }
}

template <typename T>
void depthwise2d_backward_data(const T* dy, const T* w, int64_t u, int64_t c, int64_t h,
                               int64_t wd, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                               int64_t ph, int64_t pw, T* dx) {
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(wd, kw, sw, pw);
  auto body = [&](int64_t ui) {
    const T* g = dy + ui * oh * ow;
    const T* kern = w + (ui % c) * kh * kw;
    T* out = dx + ui * h * wd;
    for (int64_t iy = 0; iy < h; ++iy)
      for (int64_t ix = 0; ix < wd; ++ix) {
        const int64_t ty0 = iy + ph, tx0 = ix + pw;
        const int64_t ky0 = ty0 % sh, kx0 = tx0 % sw;
        T acc = T(0);
        int64_t oy = (ty0 - ky0) / sh;
        for (int64_t ky = ky0; ky < kh; ky += sh, --oy) {
          if (oy < 0) break;
          if (oy >= oh) continue;
          int64_t ox = (tx0 - kx0) / sw;
          const T* krow = kern + ky * kw;
          const T* grow = g + oy * ow;
          for (int64_t kx = kx0; kx < kw; kx += sw, --ox) {
            if (ox < 0) break;
            if (ox >= ow) continue;
            acc += krow[kx] * grow[ox];
          }
        }
        out[iy * wd + ix] = acc;
      }
  };
  if (parallel_worthwhile(u * h * wd * kh * kw)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ui = 0; ui < u; ++ui) body(ui);
  } else {
    for (int64_t ui = 0; ui < u; ++ui) body(ui);
  }
}

template <typename T>
void depthwise2d_backward_weights(const T* x, const T* dy, int64_t u, int64_t c, int64_t h,
                                  int64_t wd, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                                  int64_t ph, int64_t pw, T* dw) {
  const int64_t oh = out_extent(h, kh, sh, ph);
  const int64_t ow = out_extent(wd, kw, sw, pw);
  // one thread per kernel channel keeps the accumulation race-free
  auto body = [&](int64_t ci) {
    T* kern = dw + ci * kh * kw;
    for (int64_t ui = ci; ui < u; ui += c) {
      const T* plane = x + ui * h * wd;
      const T* g = dy + ui * oh * ow;
      for (int64_t ky = 0; ky < kh; ++ky)
        for (int64_t kx = 0; kx < kw; ++kx) {
          T acc = T(0);
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * sh - ph + ky;
            if (iy < 0 || iy >= h) continue;
            const T* xrow = plane + iy * wd;
            const T* grow = g + oy * ow;
#pragma omp simd reduction(+ : acc)
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * sw - pw + kx;
              if (ix >= 0 && ix < wd) acc += xrow[ix] * grow[ox];
            }
          }
          kern[ky * kw + kx] += acc;
        }
    }
  };
  if (parallel_worthwhile(u * oh * ow * kh * kw)) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  } else {
    for (int64_t ci = 0; ci < c; ++ci) body(ci);
  }
}

#define VIDCTL_INSTANTIATE_CONV(T)                                                              \
  template void depthwise2d_forward<T>(const T*, const T*, int64_t, int64_t, int64_t, int64_t,  \
                                       int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,   \
                                       T*);                                                     \
  template void depthwise2d_backward_data<T>(const T*, const T*, int64_t, int64_t, int64_t,    \
                                             int64_t, int64_t, int64_t, int64_t, int64_t,      \
                                             int64_t, int64_t, T*);                             \
  template void depthwise2d_backward_weights<T>(const T*, const T*, int64_t, int64_t, int64_t, \
                                                int64_t, int64_t, int64_t, int64_t, int64_t,   \
                                                int64_t, int64_t, T*);                          \
  template void im2col2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, T*);                                     \
  template void col2im2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, T*);                                     \
  template void im2col3d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, T*); \
  template void col2im3d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, T*); \
  namespace ref {                                                                               \
  template void im2col2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, T*);                                     \
  template void col2im2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, T*);                                     \
  }                                                                                             \
  namespace omp {                                                                               \
  template void im2col2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, T*);                                     \
  template void col2im2d<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,     \
                            int64_t, int64_t, int64_t, T*);                                     \
  }

VIDCTL_INSTANTIATE_CONV(float)
VIDCTL_INSTANTIATE_CONV(double)

}  // namespace vidctl::core::kernels
