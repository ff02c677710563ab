#pragma once

#include <cstdint>

#include "vidctl/core/parallel.hpp"

// Low-level compute kernels. Each kernel comes in two flavours:
//   ref::  straightforward serial implementation, the behavioural reference
//   omp::  OpenMP-parallel implementation
// The unprefixed functions dispatch on core::exec_mode(). Parallel loops are
// arranged so every output element is written by exactly one thread, which
// keeps results bit-identical across runs for a fixed thread count.

namespace vidctl::core::kernels {

// ---- GEMM ------------------------------------------------------------
// C[m,n] = alpha * op(A) * op(B) + beta * C, row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c);

namespace ref {
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c);
}
namespace omp {
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c);
}

// ---- im2col / col2im (2D) ---------------------------------------------
// x: [C, H, W] -> col: [C*kh*kw, OH*OW]; one image at a time.
template <typename T>
void im2col2d(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* col);
template <typename T>
void col2im2d(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* x);

namespace ref {
template <typename T>
void im2col2d(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* col);
template <typename T>
void col2im2d(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* x);
}
namespace omp {
template <typename T>
void im2col2d(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* col);
template <typename T>
void col2im2d(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t sh,
              int64_t sw, int64_t ph, int64_t pw, T* x);
}

// ---- im2col / col2im (3D) ---------------------------------------------
// x: [C, D, H, W] -> col: [C*kd*kh*kw, OD*OH*OW].
template <typename T>
void im2col3d(const T* x, int64_t c, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
              int64_t kw, int64_t sd, int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw,
              T* col);
template <typename T>
void col2im3d(const T* col, int64_t c, int64_t d, int64_t h, int64_t w, int64_t kd, int64_t kh,
              int64_t kw, int64_t sd, int64_t sh, int64_t sw, int64_t pd, int64_t ph, int64_t pw,
              T* x);

// ---- depthwise 2D convolution -------------------------------------------
// One channel per group. x: [U, H, W] with U = N*C plane count, w: [C, kh,
// kw]; plane u uses kernel u % c. Direct loops, no column buffers.
template <typename T>
void depthwise2d_forward(const T* x, const T* w, int64_t u, int64_t c, int64_t h, int64_t wd,
                         int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph, int64_t pw,
                         T* y);
template <typename T>
void depthwise2d_backward_data(const T* dy, const T* w, int64_t u, int64_t c, int64_t h,
                               int64_t wd, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                               int64_t ph, int64_t pw, T* dx);
template <typename T>
void depthwise2d_backward_weights(const T* x, const T* dy, int64_t u, int64_t c, int64_t h,
                                  int64_t wd, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                                  int64_t ph, int64_t pw, T* dw);

// ---- group normalization ----------------------------------------------
// x: [N, C, S] flattened spatial; per (n, group) statistics.
template <typename T>
void group_norm_forward(const T* x, int64_t n, int64_t c, int64_t s, int64_t groups, T eps, T* y,
                        T* mean, T* rstd);
template <typename T>
void group_norm_backward(const T* x, const T* dy, const T* mean, const T* rstd, int64_t n,
                         int64_t c, int64_t s, int64_t groups, T* dx);

// ---- softmax ------------------------------------------------------------
// Softmax over the middle axis of x viewed as [outer, axis, inner].
template <typename T>
void softmax_forward(const T* x, int64_t outer, int64_t axis, int64_t inner, T* y);
template <typename T>
void softmax_backward(const T* y, const T* dy, int64_t outer, int64_t axis, int64_t inner, T* dx);

// ---- bilinear backward warp ----------------------------------------------
// y[c, i, j] = x sampled at (j + flow_x[i,j], i + flow_y[i,j]); zero outside.
// flow layout: [2, H, W] with channel 0 = dx, channel 1 = dy.
template <typename T>
void warp_bilinear_forward(const T* x, const T* flow, int64_t c, int64_t h, int64_t w, T* y);
template <typename T>
void warp_bilinear_backward(const T* x, const T* flow, const T* dy, int64_t c, int64_t h,
                            int64_t w, T* dx, T* dflow);

// ---- resize ---------------------------------------------------------------
// Bilinear, half-pixel centers (align_corners = false). x: [C, H, W].
template <typename T>
void resize_bilinear_forward(const T* x, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                             T* y);
template <typename T>
void resize_bilinear_backward(const T* dy, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                              T* dx);
template <typename T>
void resize_nearest_forward(const T* x, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                            T* y);
template <typename T>
void resize_nearest_backward(const T* dy, int64_t c, int64_t h, int64_t w, int64_t oh, int64_t ow,
                             T* dx);

}  // namespace vidctl::core::kernels
