#pragma once

#include <vector>

#include "vidctl/core/autograd.hpp"

// Differentiable tensor ops. Shapes follow the usual conventions:
//   images [N, C, H, W], volumes [N, C, D, H, W], matrices row-major.
// Binary elementwise ops require identical shapes; broadcasting is handled
// by the few dedicated ops that need it (bias add, channel scale).

namespace vidctl::core::ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s);
template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s);

template <typename T>
Var<T> neg(const Var<T>& a);
template <typename T>
Var<T> exp(const Var<T>& a);
template <typename T>
Var<T> log(const Var<T>& a);
template <typename T>
Var<T> sqrt(const Var<T>& a);
template <typename T>
Var<T> tanh(const Var<T>& a);
template <typename T>
Var<T> sigmoid(const Var<T>& a);
template <typename T>
Var<T> softplus(const Var<T>& a);
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.01));
template <typename T>
Var<T> abs(const Var<T>& a);
template <typename T>
Var<T> square(const Var<T>& a);

template <typename T>
Var<T> sum_all(const Var<T>& a);  // -> [1]
template <typename T>
Var<T> mean_all(const Var<T>& a);  // -> [1]

// y[i] = a[i] - s[0], with s a scalar [1] variable.
template <typename T>
Var<T> sub_bcast(const Var<T>& a, const Var<T>& s);

// Mean over all trailing dims after [N, C]; x: [N, C, ...] -> [N, C].
template <typename T>
Var<T> mean_spatial(const Var<T>& x);

// y[n,c,...] = x[n,c,...] * s[n,c]
template <typename T>
Var<T> mul_channels(const Var<T>& x, const Var<T>& s);

// y[n,c,...] = x[n,c,...] + b[c]
template <typename T>
Var<T> add_bias_channels(const Var<T>& x, const Var<T>& b);

// y[n,c,...] = x[n,c,...] * s[c]
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s);

// y[n,c,...] = x[n,c,...] + s[n,c]
template <typename T>
Var<T> add_channels(const Var<T>& x, const Var<T>& s);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<int>& perm);
template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis);
template <typename T>
Var<T> slice(const Var<T>& x, int axis, int64_t start, int64_t len);

// a: [m, k] (or [k, m] if trans_a), b: [k, n] (or [n, k]); y: [m, n].
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false);

// x: [n, in], w: [out, in], b: [out] (optional) -> [n, out]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// y[i, j] = x[i, j] + b[j]
template <typename T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& b);

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad,
              int64_t groups = 1);

// w layout: [C_in, C_out, kh, kw]; output spatial = (in-1)*stride - 2*pad + k.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad);

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t sd, int64_t sh,
              int64_t sw, int64_t pd, int64_t ph, int64_t pw, int64_t groups = 1);

// Group normalization without affine parameters; x: [N, C, ...].
template <typename T>
Var<T> group_norm(const Var<T>& x, int64_t groups, T eps = T(1e-5));

template <typename T>
Var<T> softmax(const Var<T>& x, int axis);

template <typename T>
Var<T> upsample_nearest2d(const Var<T>& x, int64_t factor);
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int64_t oh, int64_t ow);

// x: [N, C, H, W], flow: [N, 2, H, W]; zero padding outside the frame.
template <typename T>
Var<T> warp_bilinear(const Var<T>& x, const Var<T>& flow);

// Stacks K scalar vars ([1] each) into a vector [K].
template <typename T>
Var<T> stack_scalars(const std::vector<Var<T>>& xs);

}  // namespace vidctl::core::ops
