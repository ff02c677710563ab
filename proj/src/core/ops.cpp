#include "vidctl/core/ops.hpp"

#include <omp.h>

#include <cmath>
#include <cstring>

#include "vidctl/core/kernels.hpp"

namespace vidctl::core::ops {

namespace {

using kernels::col2im2d;
using kernels::col2im3d;
using kernels::gemm;
using kernels::im2col2d;
using kernels::im2col3d;

template <typename T, typename F>
void map_ew(const T* x, T* y, int64_t n, F f) {
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (parallel_worthwhile(n))
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <typename T, typename F>
void zip_ew(const T* a, const T* b, T* y, int64_t n, F f) {
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (parallel_worthwhile(n))
  for (int64_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

// Accumulates f(g[i], ...) into a fresh tensor and pushes it to the parent.
template <typename T, typename F>
void push_mapped(Node<T>& self, const Var<T>& parent, F f) {
  if (!parent->requires_grad) return;
  Tensor<T> g(parent->value.shape());
  const T* gr = self.grad.data();
  T* out = g.data();
  const int64_t n = g.numel();
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (parallel_worthwhile(n))
  for (int64_t i = 0; i < n; ++i) out[i] = f(gr[i], i);
  parent->accumulate(g);
}

template <typename T>
int64_t spatial_size(const Shape& s, size_t from) {
  int64_t n = 1;
  for (size_t i = from; i < s.size(); ++i) n *= s[i];
  return n;
}

inline int64_t conv_out(int64_t in, int64_t k, int64_t s, int64_t p) {
  return (in + 2 * p - k) / s + 1;
}

}  // namespace

// ---------------------------------------------------------------- arithmetic

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> y(a->value.shape());
  zip_ew(a->value.data(), b->value.data(), y.data(), y.numel(), [](T x, T z) { return x + z; });
  return make_op<T>(std::move(y), {a, b}, [a, b](Node<T>& self) {
    a->accumulate(self.grad);
    b->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<T> y(a->value.shape());
  zip_ew(a->value.data(), b->value.data(), y.data(), y.numel(), [](T x, T z) { return x - z; });
  return make_op<T>(std::move(y), {a, b}, [a, b](Node<T>& self) {
    a->accumulate(self.grad);
    push_mapped(self, b, [](T g, int64_t) { return -g; });
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> y(a->value.shape());
  zip_ew(a->value.data(), b->value.data(), y.data(), y.numel(), [](T x, T z) { return x * z; });
  return make_op<T>(std::move(y), {a, b}, [a, b](Node<T>& self) {
    push_mapped(self, a, [b](T g, int64_t i) { return g * b->value[i]; });
    push_mapped(self, b, [a](T g, int64_t i) { return g * a->value[i]; });
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  check_same_shape(a->value, b->value, "div");
  Tensor<T> y(a->value.shape());
  zip_ew(a->value.data(), b->value.data(), y.data(), y.numel(), [](T x, T z) { return x / z; });
  return make_op<T>(std::move(y), {a, b}, [a, b](Node<T>& self) {
    push_mapped(self, a, [b](T g, int64_t i) { return g / b->value[i]; });
    push_mapped(self, b, [a, b](T g, int64_t i) {
      const T bv = b->value[i];
      return -g * a->value[i] / (bv * bv);
    });
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [s](T x) { return x + s; });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) { a->accumulate(self.grad); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [s](T x) { return x * s; });
  return make_op<T>(std::move(y), {a}, [a, s](Node<T>& self) {
    push_mapped(self, a, [s](T g, int64_t) { return g * s; });
  });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return mul_scalar(a, T(-1));
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) { return std::exp(x); });
  auto out = make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [&self](T g, int64_t i) { return g * self.value[i]; });
  });
  return out;
}

template <typename T>
Var<T> log(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) { return std::log(x); });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [a](T g, int64_t i) { return g / a->value[i]; });
  });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) { return std::sqrt(x); });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [&self](T g, int64_t i) { return g * T(0.5) / self.value[i]; });
  });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) { return std::tanh(x); });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [&self](T g, int64_t i) {
      const T t = self.value[i];
      return g * (T(1) - t * t);
    });
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(),
         [](T x) { return T(1) / (T(1) + std::exp(-x)); });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [&self](T g, int64_t i) {
      const T s = self.value[i];
      return g * s * (T(1) - s);
    });
  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) {
    return x > T(20) ? x : std::log1p(std::exp(x));
  });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [a](T g, int64_t i) {
      return g / (T(1) + std::exp(-a->value[i]));
    });
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [slope](T x) { return x > T(0) ? x : slope * x; });
  return make_op<T>(std::move(y), {a}, [a, slope](Node<T>& self) {
    push_mapped(self, a, [a, slope](T g, int64_t i) {
      return a->value[i] > T(0) ? g : slope * g;
    });
  });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) { return std::abs(x); });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [a](T g, int64_t i) {
      const T x = a->value[i];
      return x > T(0) ? g : (x < T(0) ? -g : T(0));
    });
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [](T x) { return x * x; });
  return make_op<T>(std::move(y), {a}, [a](Node<T>& self) {
    push_mapped(self, a, [a](T g, int64_t i) { return T(2) * g * a->value[i]; });
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T acc = T(0);
  const T* x = a->value.data();
  for (int64_t i = 0; i < a->value.numel(); ++i) acc += x[i];
  return make_op<T>(Tensor<T>::scalar(acc), {a}, [a](Node<T>& self) {
    const T g = self.grad[0];
    push_mapped(self, a, [g](T, int64_t) { return g; });
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  const T inv = T(1) / static_cast<T>(a->value.numel());
  return mul_scalar(sum_all(a), inv);
}

template <typename T>
Var<T> sub_bcast(const Var<T>& a, const Var<T>& s) {
  if (s->value.numel() != 1) throw std::invalid_argument("sub_bcast: s must be scalar");
  const T sv = s->value[0];
  Tensor<T> y(a->value.shape());
  map_ew(a->value.data(), y.data(), y.numel(), [sv](T x) { return x - sv; });
  return make_op<T>(std::move(y), {a, s}, [a, s](Node<T>& self) {
    a->accumulate(self.grad);
    if (s->requires_grad) {
      T acc = T(0);
      for (int64_t i = 0; i < self.grad.numel(); ++i) acc += self.grad[i];
      s->accumulate(Tensor<T>::scalar(-acc));
    }
  });
}

template <typename T>
Var<T> mean_spatial(const Var<T>& x) {
  const Shape& s = x->value.shape();
  const int64_t n = s[0], c = s[1];
  const int64_t sp = spatial_size<T>(s, 2);
  Tensor<T> y({n, c});
  const T inv = T(1) / static_cast<T>(sp);
  for (int64_t i = 0; i < n * c; ++i) {
    const T* p = x->value.data() + i * sp;
    T acc = T(0);
    for (int64_t k = 0; k < sp; ++k) acc += p[k];
    y[i] = acc * inv;
  }
  return make_op<T>(std::move(y), {x}, [x, sp, inv](Node<T>& self) {
    push_mapped(self, x, [&self, sp, inv](T, int64_t i) { return self.grad[i / sp] * inv; });
  });
}

template <typename T>
Var<T> mul_channels(const Var<T>& x, const Var<T>& s) {
  const Shape& xs = x->value.shape();
  const int64_t n = xs[0], c = xs[1];
  const int64_t sp = spatial_size<T>(xs, 2);
  if (s->value.shape() != Shape{n, c})
    throw std::invalid_argument("mul_channels: scale must be [N, C]");
  Tensor<T> y(xs);
  for (int64_t i = 0; i < n * c; ++i) {
    const T sv = s->value[i];
    const T* xp = x->value.data() + i * sp;
    T* yp = y.data() + i * sp;
    for (int64_t k = 0; k < sp; ++k) yp[k] = xp[k] * sv;
  }
  return make_op<T>(std::move(y), {x, s}, [x, s, n, c, sp](Node<T>& self) {
    push_mapped(self, x, [&self, s, sp](T g, int64_t i) { return g * s->value[i / sp]; });
    if (s->requires_grad) {
      Tensor<T> gs({n, c});
      for (int64_t i = 0; i < n * c; ++i) {
        const T* gp = self.grad.data() + i * sp;
        const T* xp = x->value.data() + i * sp;
        T acc = T(0);
        for (int64_t k = 0; k < sp; ++k) acc += gp[k] * xp[k];
        gs[i] = acc;
      }
      s->accumulate(gs);
    }
  });
}

template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
  const Shape& xs = x->value.shape();
  const int64_t c = xs[1];
  const int64_t sp = spatial_size<T>(xs, 2);
  if (s->value.numel() != c) throw std::invalid_argument("scale_channels: scale must be [C]");
  Tensor<T> y(xs);
  const int64_t nc = xs[0] * c;
  for (int64_t i = 0; i < nc; ++i) {
    const T sv = s->value[i % c];
    const T* xp = x->value.data() + i * sp;
    T* yp = y.data() + i * sp;
    for (int64_t k = 0; k < sp; ++k) yp[k] = xp[k] * sv;
  }
  return make_op<T>(std::move(y), {x, s}, [x, s, c, sp, nc](Node<T>& self) {
    push_mapped(self, x, [s, c, sp](T g, int64_t i) { return g * s->value[(i / sp) % c]; });
    if (s->requires_grad) {
      Tensor<T> gs = Tensor<T>::zeros({c});
      for (int64_t i = 0; i < nc; ++i) {
        const T* gp = self.grad.data() + i * sp;
        const T* xp = x->value.data() + i * sp;
        T acc = T(0);
        for (int64_t k = 0; k < sp; ++k) acc += gp[k] * xp[k];
        gs[i % c] += acc;
      }
      s->accumulate(gs);
    }
  });
}

template <typename T>
Var<T> add_channels(const Var<T>& x, const Var<T>& s) {
  const Shape& xs = x->value.shape();
  const int64_t n = xs[0], c = xs[1];
  const int64_t sp = spatial_size<T>(xs, 2);
  if (s->value.shape() != Shape{n, c}) throw std::invalid_argument("add_channels: must be [N, C]");
  Tensor<T> y(xs);
  for (int64_t i = 0; i < n * c; ++i) {
    const T sv = s->value[i];
    const T* xp = x->value.data() + i * sp;
    T* yp = y.data() + i * sp;
    for (int64_t k = 0; k < sp; ++k) yp[k] = xp[k] + sv;
  }
  return make_op<T>(std::move(y), {x, s}, [x, s, n, c, sp](Node<T>& self) {
    x->accumulate(self.grad);
    if (s->requires_grad) {
      Tensor<T> gs({n, c});
      for (int64_t i = 0; i < n * c; ++i) {
        const T* gp = self.grad.data() + i * sp;
        T acc = T(0);
        for (int64_t k = 0; k < sp; ++k) acc += gp[k];
        gs[i] = acc;
      }
      s->accumulate(gs);
    }
  });
}

template <typename T>
Var<T> add_bias_channels(const Var<T>& x, const Var<T>& b) {
  const Shape& xs = x->value.shape();
  const int64_t c = xs[1];
  const int64_t sp = spatial_size<T>(xs, 2);
  if (b->value.numel() != c) throw std::invalid_argument("add_bias_channels: bias must be [C]");
  Tensor<T> y(xs);
  const int64_t nc = xs[0] * c;
  for (int64_t i = 0; i < nc; ++i) {
    const T bv = b->value[i % c];
    const T* xp = x->value.data() + i * sp;
    T* yp = y.data() + i * sp;
    for (int64_t k = 0; k < sp; ++k) yp[k] = xp[k] + bv;
  }
  return make_op<T>(std::move(y), {x, b}, [x, b, c, sp, nc](Node<T>& self) {
    x->accumulate(self.grad);
    if (b->requires_grad) {
      Tensor<T> gb = Tensor<T>::zeros({c});
      for (int64_t i = 0; i < nc; ++i) {
        const T* gp = self.grad.data() + i * sp;
        T acc = T(0);
        for (int64_t k = 0; k < sp; ++k) acc += gp[k];
        gb[i % c] += acc;
      }
      b->accumulate(gb);
    }
  });
}

// ---------------------------------------------------------------- reshaping

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x->value.reshaped(std::move(shape));
  return make_op<T>(std::move(y), {x}, [x](Node<T>& self) {
    x->accumulate(self.grad.reshaped(x->value.shape()));
  });
}

namespace {
template <typename T>
void permute_copy(const Tensor<T>& in, const std::vector<int>& perm, Tensor<T>& out) {
  const Shape& is = in.shape();
  const int nd = static_cast<int>(is.size());
  std::vector<int64_t> istride(nd, 1);
  for (int i = nd - 2; i >= 0; --i) istride[i] = istride[i + 1] * is[i + 1];
  const Shape& os = out.shape();
  std::vector<int64_t> ostride(nd, 1);
  for (int i = nd - 2; i >= 0; --i) ostride[i] = ostride[i + 1] * os[i + 1];
  const int64_t n = in.numel();
  const T* src = in.data();
  T* dst = out.data();
#pragma omp parallel for schedule(static) num_threads(num_threads()) if (parallel_worthwhile(n))
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, ioff = 0;
    for (int d = 0; d < nd; ++d) {
      const int64_t od = rem / ostride[d];
      rem -= od * ostride[d];
      ioff += od * istride[perm[d]];
    }
    dst[o] = src[ioff];
  }
}
}  // namespace

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<int>& perm) {
  const Shape& is = x->value.shape();
  if (perm.size() != is.size()) throw std::invalid_argument("permute: rank mismatch");
  Shape os(is.size());
  for (size_t i = 0; i < perm.size(); ++i) os[i] = is[perm[i]];
  Tensor<T> y(os);
  permute_copy(x->value, perm, y);
  return make_op<T>(std::move(y), {x}, [x, perm](Node<T>& self) {
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
    Tensor<T> g(x->value.shape());
    permute_copy(self.grad, inv, g);
    x->accumulate(g);
  });
}

namespace {
// Views shape as [outer, axis_extent, inner] around `axis`.
inline void axis_split(const Shape& s, int axis, int64_t* outer, int64_t* extent, int64_t* inner) {
  *outer = 1;
  for (int i = 0; i < axis; ++i) *outer *= s[i];
  *extent = s[axis];
  *inner = 1;
  for (size_t i = axis + 1; i < s.size(); ++i) *inner *= s[i];
}
}  // namespace

template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input");
  Shape os = xs[0]->value.shape();
  int64_t total = 0;
  for (const auto& v : xs) total += v->value.shape()[axis];
  os[axis] = total;
  Tensor<T> y(os);
  int64_t outer, extent, inner;
  axis_split(os, axis, &outer, &extent, &inner);
  int64_t off = 0;
  for (const auto& v : xs) {
    const int64_t e = v->value.shape()[axis];
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(y.data() + (o * extent + off) * inner, v->value.data() + o * e * inner,
                  sizeof(T) * static_cast<size_t>(e * inner));
    off += e;
  }
  std::vector<Var<T>> parents(xs.begin(), xs.end());
  return make_op<T>(std::move(y), std::move(parents),
                    [xs, axis, outer, extent, inner](Node<T>& self) {
                      int64_t off = 0;
                      for (const auto& v : xs) {
                        const int64_t e = v->value.shape()[axis];
                        if (v->requires_grad) {
                          Tensor<T> g(v->value.shape());
                          for (int64_t o = 0; o < outer; ++o)
                            std::memcpy(g.data() + o * e * inner,
                                        self.grad.data() + (o * extent + off) * inner,
                                        sizeof(T) * static_cast<size_t>(e * inner));
                          v->accumulate(g);
                        }
                        off += e;
                      }
                    });
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, int64_t start, int64_t len) {
  const Shape& is = x->value.shape();
  Shape os = is;
  os[axis] = len;
  Tensor<T> y(os);
  int64_t outer, extent, inner;
  axis_split(is, axis, &outer, &extent, &inner);
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(y.data() + o * len * inner, x->value.data() + (o * extent + start) * inner,
                sizeof(T) * static_cast<size_t>(len * inner));
  return make_op<T>(std::move(y), {x},
                    [x, axis, start, len, outer, extent, inner](Node<T>& self) {
                      if (!x->requires_grad) return;
                      Tensor<T> g = Tensor<T>::zeros(x->value.shape());
                      for (int64_t o = 0; o < outer; ++o)
                        std::memcpy(g.data() + (o * extent + start) * inner,
                                    self.grad.data() + o * len * inner,
                                    sizeof(T) * static_cast<size_t>(len * inner));
                      x->accumulate(g);
                    });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b) {
  const Shape& as = a->value.shape();
  const Shape& bs = b->value.shape();
  if (as.size() != 2 || bs.size() != 2) throw std::invalid_argument("matmul: rank != 2");
  const int64_t m = trans_a ? as[1] : as[0];
  const int64_t k = trans_a ? as[0] : as[1];
  const int64_t kb = trans_b ? bs[1] : bs[0];
  const int64_t n = trans_b ? bs[0] : bs[1];
  if (k != kb) throw std::invalid_argument("matmul: inner dim mismatch");
  Tensor<T> y({m, n});
  gemm(trans_a, trans_b, m, n, k, T(1), a->value.data(), b->value.data(), T(0), y.data());
  return make_op<T>(std::move(y), {a, b}, [a, b, trans_a, trans_b, m, n, k](Node<T>& self) {
    const T* g = self.grad.data();
    if (a->requires_grad) {
      Tensor<T> ga(a->value.shape());
      if (!trans_a) {
        // dAe = g * Be^T -> [m, k]
        gemm(false, !trans_b, m, k, n, T(1), g, b->value.data(), T(0), ga.data());
      } else if (!trans_b) {
        // dA_stored = Be * g^T = B * g^T -> [k, m]
        gemm(false, true, k, m, n, T(1), b->value.data(), g, T(0), ga.data());
      } else {
        // dA_stored = B_stored^T * g^T -> [k, m]
        gemm(true, true, k, m, n, T(1), b->value.data(), g, T(0), ga.data());
      }
      a->accumulate(ga);
    }
    if (b->requires_grad) {
      Tensor<T> gb(b->value.shape());
      if (!trans_b) {
        // dBe = Ae^T * g -> [k, n]
        gemm(!trans_a, false, k, n, m, T(1), a->value.data(), g, T(0), gb.data());
      } else if (!trans_a) {
        // dB_stored = g^T * Ae -> [n, k]
        gemm(true, false, n, k, m, T(1), g, a->value.data(), T(0), gb.data());
      } else {
        // dB_stored = g^T * A_stored^T -> [n, k]
        gemm(true, true, n, k, m, T(1), g, a->value.data(), T(0), gb.data());
      }
      b->accumulate(gb);
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  Var<T> y = matmul(x, w, false, true);
  if (b) y = add_bias_rows(y, b);
  return y;
}

// y[i, j] = x[i, j] + b[j]; helper for linear layers.
template <typename T>
Var<T> add_bias_rows(const Var<T>& x, const Var<T>& b) {
  const Shape& xs = x->value.shape();
  const int64_t rows = xs[0], cols = xs[1];
  if (b->value.numel() != cols) throw std::invalid_argument("add_bias_rows: bias size");
  Tensor<T> y(xs);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) y[i * cols + j] = x->value[i * cols + j] + b->value[j];
  return make_op<T>(std::move(y), {x, b}, [x, b, rows, cols](Node<T>& self) {
    x->accumulate(self.grad);
    if (b->requires_grad) {
      Tensor<T> gb = Tensor<T>::zeros({cols});
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) gb[j] += self.grad[i * cols + j];
      b->accumulate(gb);
    }
  });
}

// ---------------------------------------------------------------- convolutions

namespace {

// Shared geometry for the grouped im2col convolutions (2D and 3D share the
// code path; 2D sets d = kd = sd = 1, pd = 0).
struct ConvGeom {
  int64_t n, ci, d, h, w;
  int64_t co, cig, cog, groups;
  int64_t kd, kh, kw, sd, sh, sw, pd, ph, pw;
  int64_t od, oh, ow;
  int64_t krows, os, in_sp;
  bool pointwise;  // 1x1(x1), stride 1, no padding: col aliases the input

  int64_t units() const { return n * groups; }
};

template <typename T>
void geom_im2col(const ConvGeom& g, const T* src, T* col) {
  if (g.kd == 1 && g.d == 1)
    im2col2d(src, g.cig, g.h, g.w, g.kh, g.kw, g.sh, g.sw, g.ph, g.pw, col);
  else
    im2col3d(src, g.cig, g.d, g.h, g.w, g.kd, g.kh, g.kw, g.sd, g.sh, g.sw, g.pd, g.ph, g.pw,
             col);
}

template <typename T>
void geom_col2im(const ConvGeom& g, const T* col, T* dst) {
  if (g.kd == 1 && g.d == 1)
    col2im2d(col, g.cig, g.h, g.w, g.kh, g.kw, g.sh, g.sw, g.ph, g.pw, dst);
  else
    col2im3d(col, g.cig, g.d, g.h, g.w, g.kd, g.kh, g.kw, g.sd, g.sh, g.sw, g.pd, g.ph, g.pw,
             dst);
}

// y = conv(x, w) for either dimensionality; units (n, group) run in parallel.
template <typename T>
Tensor<T> conv_forward(const ConvGeom& g, const Tensor<T>& x, const Tensor<T>& w, Shape yshape) {
  Tensor<T> y(std::move(yshape));
  const int64_t units = g.units();
#pragma omp parallel num_threads(num_threads()) if (parallel_worthwhile(units* g.krows* g.os))
  {
    Tensor<T> col;
    if (!g.pointwise) col = Tensor<T>({g.krows, g.os});
#pragma omp for schedule(static)
    for (int64_t u = 0; u < units; ++u) {
      const int64_t in = u / g.groups, grp = u % g.groups;
      const T* src = x.data() + (in * g.ci + grp * g.cig) * g.in_sp;
      const T* cptr = src;
      if (!g.pointwise) {
        geom_im2col(g, src, col.data());
        cptr = col.data();
      }
      gemm(false, false, g.cog, g.os, g.krows, T(1), w.data() + grp * g.cog * g.krows, cptr,
           T(0), y.data() + (in * g.co + grp * g.cog) * g.os);
    }
  }
  return y;
}

template <typename T>
void conv_backward(const ConvGeom& g, const Var<T>& x, const Var<T>& w, Node<T>& self) {
  const int64_t units = g.units();
  // input gradient: dx = col2im(W^T * dy), unit-disjoint
  if (x->requires_grad) {
    Tensor<T> dx(x->value.shape());
#pragma omp parallel num_threads(num_threads()) if (parallel_worthwhile(units* g.krows* g.os))
    {
      Tensor<T> dcol;
      if (!g.pointwise) dcol = Tensor<T>({g.krows, g.os});
#pragma omp for schedule(static)
      for (int64_t u = 0; u < units; ++u) {
        const int64_t in = u / g.groups, grp = u % g.groups;
        const T* gy = self.grad.data() + (in * g.co + grp * g.cog) * g.os;
        T* dst = dx.data() + (in * g.ci + grp * g.cig) * g.in_sp;
        if (g.pointwise) {
          gemm(true, false, g.krows, g.os, g.cog, T(1), w->value.data() + grp * g.cog * g.krows,
               gy, T(0), dst);
        } else {
          gemm(true, false, g.krows, g.os, g.cog, T(1), w->value.data() + grp * g.cog * g.krows,
               gy, T(0), dcol.data());
          geom_col2im(g, dcol.data(), dst);
        }
      }
    }
    x->accumulate(dx);
  }
  // weight gradient: per-thread partial sums reduced in thread order
  if (w->requires_grad) {
    const int nt = parallel_worthwhile(units * g.krows * g.os) ? num_threads() : 1;
    std::vector<Tensor<T>> parts;
    for (int t = 0; t < nt; ++t) parts.push_back(Tensor<T>::zeros(w->value.shape()));
#pragma omp parallel num_threads(nt) if (nt > 1)
    {
      const int tid = nt > 1 ? omp_get_thread_num() : 0;
      Tensor<T> col;
      if (!g.pointwise) col = Tensor<T>({g.krows, g.os});
#pragma omp for schedule(static)
      for (int64_t u = 0; u < units; ++u) {
        const int64_t in = u / g.groups, grp = u % g.groups;
        const T* gy = self.grad.data() + (in * g.co + grp * g.cog) * g.os;
        const T* src = x->value.data() + (in * g.ci + grp * g.cig) * g.in_sp;
        const T* cptr = src;
        if (!g.pointwise) {
          geom_im2col(g, src, col.data());
          cptr = col.data();
        }
        gemm(false, true, g.cog, g.krows, g.os, T(1), gy, cptr, T(1),
             parts[tid].data() + grp * g.cog * g.krows);
      }
    }
    for (int t = 1; t < nt; ++t)
      for (int64_t i = 0; i < parts[0].numel(); ++i) parts[0][i] += parts[t][i];
    w->accumulate(parts[0]);
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride, int64_t pad,
              int64_t groups) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv2d: rank");
  ConvGeom g;
  g.n = xs[0];
  g.ci = xs[1];
  g.d = 1;
  g.h = xs[2];
  g.w = xs[3];
  g.co = ws[0];
  g.cig = ws[1];
  g.groups = groups;
  g.kd = 1;
  g.kh = ws[2];
  g.kw = ws[3];
  g.sd = 1;
  g.sh = g.sw = stride;
  g.pd = 0;
  g.ph = g.pw = pad;
  if (g.ci / groups != g.cig || g.ci % groups != 0 || g.co % groups != 0)
    throw std::invalid_argument("conv2d: channel/group mismatch");
  g.od = 1;
  g.oh = conv_out(g.h, g.kh, stride, pad);
  g.ow = conv_out(g.w, g.kw, stride, pad);
  g.cog = g.co / groups;
  g.krows = g.cig * g.kh * g.kw;
  g.os = g.oh * g.ow;
  g.in_sp = g.h * g.w;
  g.pointwise = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;

  // depthwise path skips the column buffers entirely
  if (groups == g.ci && g.cig == 1 && g.cog == 1) {
    Tensor<T> y({g.n, g.co, g.oh, g.ow});
    kernels::depthwise2d_forward(x->value.data(), w->value.data(), g.n * g.ci, g.ci, g.h, g.w,
                                 g.kh, g.kw, stride, stride, pad, pad, y.data());
    Var<T> out = make_op<T>(std::move(y), {x, w}, [x, w, g, stride, pad](Node<T>& self) {
      if (x->requires_grad) {
        Tensor<T> dx(x->value.shape());
        kernels::depthwise2d_backward_data(self.grad.data(), w->value.data(), g.n * g.ci, g.ci,
                                           g.h, g.w, g.kh, g.kw, stride, stride, pad, pad,
                                           dx.data());
        x->accumulate(dx);
      }
      if (w->requires_grad) {
        Tensor<T> dw = Tensor<T>::zeros(w->value.shape());
        kernels::depthwise2d_backward_weights(x->value.data(), self.grad.data(), g.n * g.ci,
                                              g.ci, g.h, g.w, g.kh, g.kw, stride, stride, pad,
                                              pad, dw.data());
        w->accumulate(dw);
      }
    });
    if (b) out = add_bias_channels(out, b);
    return out;
  }

  Tensor<T> y = conv_forward(g, x->value, w->value, {g.n, g.co, g.oh, g.ow});
  Var<T> out = make_op<T>(std::move(y), {x, w},
                          [x, w, g](Node<T>& self) { conv_backward(g, x, w, self); });
  if (b) out = add_bias_channels(out, b);
  return out;
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv_transpose2d: rank");
  const int64_t n = xs[0], ci = xs[1], h = xs[2], wd = xs[3];
  if (ws[0] != ci) throw std::invalid_argument("conv_transpose2d: weight in-channels");
  const int64_t co = ws[1], kh = ws[2], kw = ws[3];
  const int64_t oh = (h - 1) * stride - 2 * pad + kh;
  const int64_t ow = (wd - 1) * stride - 2 * pad + kw;
  const int64_t krows = co * kh * kw;
  const int64_t is = h * wd;

  Tensor<T> y({n, co, oh, ow});
#pragma omp parallel num_threads(num_threads()) if (parallel_worthwhile(n* krows* is))
  {
    Tensor<T> col({krows, is});
#pragma omp for schedule(static)
    for (int64_t in = 0; in < n; ++in) {
      // col = W^T [co*kh*kw, ci] * x_n [ci, is]
      gemm(true, false, krows, is, ci, T(1), w->value.data(), x->value.data() + in * ci * is,
           T(0), col.data());
      col2im2d(col.data(), co, oh, ow, kh, kw, stride, stride, pad, pad,
               y.data() + in * co * oh * ow);
    }
  }
  Var<T> out = make_op<T>(
      std::move(y), {x, w},
      [x, w, stride, pad, n, ci, co, kh, kw, krows, is, oh, ow](Node<T>& self) {
        if (x->requires_grad) {
          Tensor<T> dx(x->value.shape());
#pragma omp parallel num_threads(num_threads()) if (parallel_worthwhile(n* krows* is))
          {
            Tensor<T> col({krows, is});
#pragma omp for schedule(static)
            for (int64_t in = 0; in < n; ++in) {
              im2col2d(self.grad.data() + in * co * oh * ow, co, oh, ow, kh, kw, stride, stride,
                       pad, pad, col.data());
              gemm(false, false, ci, is, krows, T(1), w->value.data(), col.data(), T(0),
                   dx.data() + in * ci * is);
            }
          }
          x->accumulate(dx);
        }
        if (w->requires_grad) {
          const int nt = parallel_worthwhile(n * krows * is) ? num_threads() : 1;
          std::vector<Tensor<T>> parts;
          for (int t = 0; t < nt; ++t) parts.push_back(Tensor<T>::zeros(w->value.shape()));
#pragma omp parallel num_threads(nt) if (nt > 1)
          {
            const int tid = nt > 1 ? omp_get_thread_num() : 0;
            Tensor<T> col({krows, is});
#pragma omp for schedule(static)
            for (int64_t in = 0; in < n; ++in) {
              im2col2d(self.grad.data() + in * co * oh * ow, co, oh, ow, kh, kw, stride, stride,
                       pad, pad, col.data());
              gemm(false, true, ci, krows, is, T(1), x->value.data() + in * ci * is, col.data(),
                   T(1), parts[tid].data());
            }
          }
          for (int t = 1; t < nt; ++t)
            for (int64_t i = 0; i < parts[0].numel(); ++i) parts[0][i] += parts[t][i];
          w->accumulate(parts[0]);
        }
      });
  if (b) out = add_bias_channels(out, b);
  return out;
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t sd, int64_t sh,
              int64_t sw, int64_t pd, int64_t ph, int64_t pw, int64_t groups) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  if (xs.size() != 5 || ws.size() != 5) throw std::invalid_argument("conv3d: rank");
  ConvGeom g;
  g.n = xs[0];
  g.ci = xs[1];
  g.d = xs[2];
  g.h = xs[3];
  g.w = xs[4];
  g.co = ws[0];
  g.cig = ws[1];
  g.groups = groups;
  g.kd = ws[2];
  g.kh = ws[3];
  g.kw = ws[4];
  g.sd = sd;
  g.sh = sh;
  g.sw = sw;
  g.pd = pd;
  g.ph = ph;
  g.pw = pw;
  if (g.ci / groups != g.cig || g.co % groups != 0)
    throw std::invalid_argument("conv3d: groups");
  g.od = conv_out(g.d, g.kd, sd, pd);
  g.oh = conv_out(g.h, g.kh, sh, ph);
  g.ow = conv_out(g.w, g.kw, sw, pw);
  g.cog = g.co / groups;
  g.krows = g.cig * g.kd * g.kh * g.kw;
  g.os = g.od * g.oh * g.ow;
  g.in_sp = g.d * g.h * g.w;
  g.pointwise = g.kd == 1 && g.kh == 1 && g.kw == 1 && sd == 1 && sh == 1 && sw == 1 &&
                pd == 0 && ph == 0 && pw == 0;

  Tensor<T> y = conv_forward(g, x->value, w->value, {g.n, g.co, g.od, g.oh, g.ow});
  Var<T> out = make_op<T>(std::move(y), {x, w},
                          [x, w, g](Node<T>& self) { conv_backward(g, x, w, self); });
  if (b) out = add_bias_channels(out, b);
  return out;
}

// ---------------------------------------------------------------- normalization

template <typename T>
Var<T> group_norm(const Var<T>& x, int64_t groups, T eps) {
  const Shape& xs = x->value.shape();
  const int64_t n = xs[0], c = xs[1];
  if (c % groups != 0) throw std::invalid_argument("group_norm: C % groups != 0");
  const int64_t sp = spatial_size<T>(xs, 2);
  Tensor<T> y(xs);
  auto mean = std::make_shared<Tensor<T>>(Shape{n * groups});
  auto rstd = std::make_shared<Tensor<T>>(Shape{n * groups});
  kernels::group_norm_forward(x->value.data(), n, c, sp, groups, eps, y.data(), mean->data(),
                              rstd->data());
  return make_op<T>(std::move(y), {x}, [x, groups, n, c, sp, mean, rstd](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T> dx(x->value.shape());
    kernels::group_norm_backward(x->value.data(), self.grad.data(), mean->data(), rstd->data(), n,
                                 c, sp, groups, dx.data());
    x->accumulate(dx);
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, int axis) {
  const Shape& xs = x->value.shape();
  if (axis < 0) axis += static_cast<int>(xs.size());
  int64_t outer, extent, inner;
  axis_split(xs, axis, &outer, &extent, &inner);
  Tensor<T> y(xs);
  kernels::softmax_forward(x->value.data(), outer, extent, inner, y.data());
  return make_op<T>(std::move(y), {x}, [x, outer, extent, inner](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T> dx(x->value.shape());
    kernels::softmax_backward(self.value.data(), self.grad.data(), outer, extent, inner,
                              dx.data());
    x->accumulate(dx);
  });
}

// ---------------------------------------------------------------- image ops

template <typename T>
Var<T> upsample_nearest2d(const Var<T>& x, int64_t factor) {
  const Shape& xs = x->value.shape();
  const int64_t nc = xs[0] * xs[1], h = xs[2], w = xs[3];
  const int64_t oh = h * factor, ow = w * factor;
  Tensor<T> y({xs[0], xs[1], oh, ow});
  kernels::resize_nearest_forward(x->value.data(), nc, h, w, oh, ow, y.data());
  return make_op<T>(std::move(y), {x}, [x, nc, h, w, oh, ow](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T> dx = Tensor<T>::zeros(x->value.shape());
    kernels::resize_nearest_backward(self.grad.data(), nc, h, w, oh, ow, dx.data());
    x->accumulate(dx);
  });
}

template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int64_t oh, int64_t ow) {
  const Shape& xs = x->value.shape();
  const int64_t nc = xs[0] * xs[1], h = xs[2], w = xs[3];
  Tensor<T> y({xs[0], xs[1], oh, ow});
  kernels::resize_bilinear_forward(x->value.data(), nc, h, w, oh, ow, y.data());
  return make_op<T>(std::move(y), {x}, [x, nc, h, w, oh, ow](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T> dx = Tensor<T>::zeros(x->value.shape());
    kernels::resize_bilinear_backward(self.grad.data(), nc, h, w, oh, ow, dx.data());
    x->accumulate(dx);
  });
}

template <typename T>
Var<T> warp_bilinear(const Var<T>& x, const Var<T>& flow) {
  const Shape& xs = x->value.shape();
  const Shape& fs = flow->value.shape();
  if (fs.size() != 4 || fs[1] != 2 || fs[0] != xs[0] || fs[2] != xs[2] || fs[3] != xs[3])
    throw std::invalid_argument("warp_bilinear: flow must be [N,2,H,W] matching x");
  const int64_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  Tensor<T> y(xs);
  for (int64_t in = 0; in < n; ++in)
    kernels::warp_bilinear_forward(x->value.data() + in * c * h * w,
                                   flow->value.data() + in * 2 * h * w, c, h, w,
                                   y.data() + in * c * h * w);
  return make_op<T>(std::move(y), {x, flow}, [x, flow, n, c, h, w](Node<T>& self) {
    Tensor<T> dx, dflow;
    if (x->requires_grad) dx = Tensor<T>::zeros(x->value.shape());
    if (flow->requires_grad) dflow = Tensor<T>::zeros(flow->value.shape());
    for (int64_t in = 0; in < n; ++in)
      kernels::warp_bilinear_backward(
          x->value.data() + in * c * h * w, flow->value.data() + in * 2 * h * w,
          self.grad.data() + in * c * h * w, c, h, w,
          dx.defined() ? dx.data() + in * c * h * w : nullptr,
          dflow.defined() ? dflow.data() + in * 2 * h * w : nullptr);
    if (dx.defined()) x->accumulate(dx);
    if (dflow.defined()) flow->accumulate(dflow);
  });
}

template <typename T>
Var<T> stack_scalars(const std::vector<Var<T>>& xs) {
  const int64_t k = static_cast<int64_t>(xs.size());
  Tensor<T> y({k});
  for (int64_t i = 0; i < k; ++i) {
    if (xs[i]->value.numel() != 1) throw std::invalid_argument("stack_scalars: non-scalar input");
    y[i] = xs[i]->value[0];
  }
  std::vector<Var<T>> parents(xs.begin(), xs.end());
  return make_op<T>(std::move(y), std::move(parents), [xs](Node<T>& self) {
    for (size_t i = 0; i < xs.size(); ++i)
      xs[i]->accumulate(Tensor<T>::scalar(self.grad[i]));
  });
}

// ---------------------------------------------------------------- instantiation

#define VIDCTL_INSTANTIATE_OPS(T)                                                             \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> div<T>(const Var<T>&, const Var<T>&);                                       \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                           \
  template Var<T> mul_scalar<T>(const Var<T>&, T);                                           \
  template Var<T> neg<T>(const Var<T>&);                                                     \
  template Var<T> exp<T>(const Var<T>&);                                                     \
  template Var<T> log<T>(const Var<T>&);                                                     \
  template Var<T> sqrt<T>(const Var<T>&);                                                    \
  template Var<T> tanh<T>(const Var<T>&);                                                    \
  template Var<T> sigmoid<T>(const Var<T>&);                                                 \
  template Var<T> softplus<T>(const Var<T>&);                                                \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                           \
  template Var<T> abs<T>(const Var<T>&);                                                     \
  template Var<T> square<T>(const Var<T>&);                                                  \
  template Var<T> sum_all<T>(const Var<T>&);                                                 \
  template Var<T> mean_all<T>(const Var<T>&);                                                \
  template Var<T> sub_bcast<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> mean_spatial<T>(const Var<T>&);                                            \
  template Var<T> mul_channels<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> add_bias_channels<T>(const Var<T>&, const Var<T>&);                        \
  template Var<T> scale_channels<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> add_channels<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                          \
  template Var<T> permute<T>(const Var<T>&, const std::vector<int>&);                        \
  template Var<T> concat<T>(const std::vector<Var<T>>&, int);                                \
  template Var<T> slice<T>(const Var<T>&, int, int64_t, int64_t);                            \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&, bool, bool);                       \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                    \
  template Var<T> add_bias_rows<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int64_t, int64_t,   \
                            int64_t);                                                        \
  template Var<T> conv_transpose2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int64_t,  \
                                      int64_t);                                              \
  template Var<T> conv3d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int64_t, int64_t,   \
                            int64_t, int64_t, int64_t, int64_t, int64_t);                    \
  template Var<T> group_norm<T>(const Var<T>&, int64_t, T);                                  \
  template Var<T> softmax<T>(const Var<T>&, int);                                            \
  template Var<T> upsample_nearest2d<T>(const Var<T>&, int64_t);                             \
  template Var<T> resize_bilinear<T>(const Var<T>&, int64_t, int64_t);                       \
  template Var<T> warp_bilinear<T>(const Var<T>&, const Var<T>&);                            \
  template Var<T> stack_scalars<T>(const std::vector<Var<T>>&);

VIDCTL_INSTANTIATE_OPS(float)
VIDCTL_INSTANTIATE_OPS(double)

}  // namespace vidctl::core::ops
