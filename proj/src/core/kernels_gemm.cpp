#include <cstring>

#include "vidctl/core/kernels.hpp"

namespace vidctl::core::kernels {

namespace {

template <typename T>
inline void scale_all(T* c, int64_t count, T beta) {
  if (beta == T(1)) return;
  if (beta == T(0)) {
    std::memset(c, 0, sizeof(T) * static_cast<size_t>(count));
    return;
  }
  for (int64_t i = 0; i < count; ++i) c[i] *= beta;
}

// One row block [i0, i1) of C[m,n]. A is [m,k] (or [k,m] transposed), B is
// [k,n] (or [n,k] transposed). beta already applied.
template <typename T>
void gemm_rows(bool trans_a, bool trans_b, int64_t i0, int64_t i1, int64_t m, int64_t n, int64_t k,
               T alpha, const T* a, const T* b, T* c) {
  if (!trans_a && !trans_b) {
    for (int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const T av = alpha * arow[p];
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // dot-product form; 4-wide j blocking shares the A row loads and the
    // simd reduction pragma licenses the reassociation the vectorizer needs
    for (int64_t i = i0; i < i1; ++i) {
      const T* __restrict arow = a + i * k;
      T* crow = c + i * n;
      int64_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const T* __restrict b0 = b + j * k;
        const T* __restrict b1 = b + (j + 1) * k;
        const T* __restrict b2 = b + (j + 2) * k;
        const T* __restrict b3 = b + (j + 3) * k;
        T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2, s3)
        for (int64_t p = 0; p < k; ++p) {
          const T av = arow[p];
          s0 += av * b0[p];
          s1 += av * b1[p];
          s2 += av * b2[p];
          s3 += av * b3[p];
        }
        crow[j] += alpha * s0;
        crow[j + 1] += alpha * s1;
        crow[j + 2] += alpha * s2;
        crow[j + 3] += alpha * s3;
      }
      for (; j < n; ++j) {
        const T* __restrict brow = b + j * k;
        T acc = T(0);
#pragma omp simd reduction(+ : acc)
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += alpha * acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (int64_t p = 0; p < k; ++p) {
        const T av = alpha * a[p * m + i];
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (int64_t p = 0; p < k; ++p) acc += a[p * m + i] * b[j * k + p];
        crow[j] += alpha * acc;
      }
    }
  }
}

}  // namespace

namespace ref {
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  scale_all(c, m * n, beta);
  gemm_rows(trans_a, trans_b, int64_t(0), m, m, n, k, alpha, a, b, c);
}
template void gemm<float>(bool, bool, int64_t, int64_t, int64_t, float, const float*, const float*,
                          float, float*);
template void gemm<double>(bool, bool, int64_t, int64_t, int64_t, double, const double*,
                           const double*, double, double*);
}  // namespace ref

namespace omp {
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  scale_all(c, m * n, beta);
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (int64_t i = 0; i < m; ++i) {
    gemm_rows(trans_a, trans_b, i, i + 1, m, n, k, alpha, a, b, c);
  }
}
template void gemm<float>(bool, bool, int64_t, int64_t, int64_t, float, const float*, const float*,
                          float, float*);
template void gemm<double>(bool, bool, int64_t, int64_t, int64_t, double, const double*,
                           const double*, double, double*);
}  // namespace omp

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha, const T* a,
          const T* b, T beta, T* c) {
  if (parallel_worthwhile(m * n * k))
    omp::gemm(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
  else
    ref::gemm(trans_a, trans_b, m, n, k, alpha, a, b, beta, c);
}
template void gemm<float>(bool, bool, int64_t, int64_t, int64_t, float, const float*, const float*,
                          float, float*);
template void gemm<double>(bool, bool, int64_t, int64_t, int64_t, double, const double*,
                           const double*, double, double*);

}  // namespace vidctl::core::kernels
