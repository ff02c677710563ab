#include "vidctl/core/fft_ops.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace vidctl::core::ops {

namespace {

// FFTW planning and plan execution on the shared buffers are serialized; the
// loss is evaluated once per training step so contention is irrelevant.
std::mutex g_fft_mutex;

template <typename T>
struct FftTraits;

template <>
struct FftTraits<double> {
  using complex = fftw_complex;
  using plan = fftw_plan;
  static plan make(int h, int w, complex* in, complex* out, int sign) {
    return fftw_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
  }
  static void exec(plan p) { fftw_execute(p); }
  static void* alloc(size_t n) { return fftw_malloc(n); }
  static void free_buf(void* p) { fftw_free(p); }
  static void destroy(plan p) { fftw_destroy_plan(p); }
};

template <>
struct FftTraits<float> {
  using complex = fftwf_complex;
  using plan = fftwf_plan;
  static plan make(int h, int w, complex* in, complex* out, int sign) {
    return fftwf_plan_dft_2d(h, w, in, out, sign, FFTW_ESTIMATE);
  }
  static void exec(plan p) { fftwf_execute(p); }
  static void* alloc(size_t n) { return fftwf_malloc(n); }
  static void free_buf(void* p) { fftwf_free(p); }
  static void destroy(plan p) { fftwf_destroy_plan(p); }
};

template <typename T>
struct PlanEntry {
  using Tr = FftTraits<T>;
  typename Tr::complex* in = nullptr;
  typename Tr::complex* out = nullptr;
  typename Tr::plan fwd{};
  typename Tr::plan bwd{};
  int h = 0, w = 0;

  PlanEntry(int hh, int ww) : h(hh), w(ww) {
    in = static_cast<typename Tr::complex*>(Tr::alloc(sizeof(typename Tr::complex) * h * w));
    out = static_cast<typename Tr::complex*>(Tr::alloc(sizeof(typename Tr::complex) * h * w));
    fwd = Tr::make(h, w, in, out, FFTW_FORWARD);
    bwd = Tr::make(h, w, in, out, FFTW_BACKWARD);
  }
  ~PlanEntry() {
    Tr::destroy(fwd);
    Tr::destroy(bwd);
    Tr::free_buf(in);
    Tr::free_buf(out);
  }

  // Unnormalized forward DFT of a real plane.
  void forward(const T* x, std::complex<T>* f) {
    for (int i = 0; i < h * w; ++i) {
      in[i][0] = x[i];
      in[i][1] = T(0);
    }
    Tr::exec(fwd);
    for (int i = 0; i < h * w; ++i) f[i] = {out[i][0], out[i][1]};
  }

  // Real part of the unnormalized inverse DFT of a complex plane.
  void backward_real(const std::complex<T>* f, T* x) {
    for (int i = 0; i < h * w; ++i) {
      in[i][0] = f[i].real();
      in[i][1] = f[i].imag();
    }
    Tr::exec(bwd);
    for (int i = 0; i < h * w; ++i) x[i] = out[i][0];
  }
};

template <typename T>
PlanEntry<T>& plan_for(int h, int w) {
  static std::map<std::pair<int, int>, std::unique_ptr<PlanEntry<T>>> cache;
  auto key = std::make_pair(h, w);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, std::make_unique<PlanEntry<T>>(h, w)).first;
  return *it->second;
}

}  // namespace

template <typename T>
Var<T> focal_frequency_loss(const Var<T>& pred, const Tensor<T>& target, T alpha) {
  check_same_shape(pred->value, target, "focal_frequency_loss");
  const Shape& s = pred->value.shape();
  if (s.size() != 4) throw std::invalid_argument("focal_frequency_loss: expect [N,C,H,W]");
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  const int64_t hw = h * w;
  const T ortho = T(1) / std::sqrt(static_cast<T>(hw));

  // weighted = weight ⊙ (F_pred − F_target); kept for the backward pass.
  auto weighted = std::make_shared<std::vector<std::complex<T>>>(n * c * hw);
  T loss = T(0);
  {
    std::lock_guard<std::mutex> lock(g_fft_mutex);
    auto& plan = plan_for<T>(static_cast<int>(h), static_cast<int>(w));
    std::vector<std::complex<T>> fp(hw), ft(hw);
    for (int64_t plane = 0; plane < n * c; ++plane) {
      plan.forward(pred->value.data() + plane * hw, fp.data());
      plan.forward(target.data() + plane * hw, ft.data());
      T wmax = T(0);
      for (int64_t i = 0; i < hw; ++i) {
        fp[i] = (fp[i] - ft[i]) * ortho;  // orthonormal spectral error
        const T mag = std::abs(fp[i]);
        const T wt = alpha == T(1) ? mag : std::pow(mag, alpha);
        ft[i] = {wt, T(0)};  // reuse ft as weight storage
        wmax = std::max(wmax, wt);
      }
      const T wnorm = wmax > T(0) ? T(1) / wmax : T(0);
      for (int64_t i = 0; i < hw; ++i) {
        const T wt = ft[i].real() * wnorm;
        const T d = std::norm(fp[i]);
        loss += wt * d;
        (*weighted)[plane * hw + i] = fp[i] * wt;
      }
    }
  }
  const T scale = T(1) / static_cast<T>(n * c * hw);
  loss *= scale;

  return make_op<T>(Tensor<T>::scalar(loss), {pred},
                    [pred, weighted, n, c, h, w, hw, ortho, scale](Node<T>& self) {
                      if (!pred->requires_grad) return;
                      const T g = self.grad[0];
                      Tensor<T> dx(pred->value.shape());
                      std::lock_guard<std::mutex> lock(g_fft_mutex);
                      auto& plan = plan_for<T>(static_cast<int>(h), static_cast<int>(w));
                      std::vector<std::complex<T>> buf(hw);
                      for (int64_t plane = 0; plane < n * c; ++plane) {
                        // dL/dF = 2 * scale * weight * (F_p - F_t); chain to the
                        // real plane through the adjoint (inverse) transform.
                        for (int64_t i = 0; i < hw; ++i)
                          buf[i] = (*weighted)[plane * hw + i] * (T(2) * scale * g);
                        plan.backward_real(buf.data(), dx.data() + plane * hw);
                        T* p = dx.data() + plane * hw;
                        for (int64_t i = 0; i < hw; ++i) p[i] *= ortho;
                      }
                      pred->accumulate(dx);
                    });
}

template Var<float> focal_frequency_loss<float>(const Var<float>&, const Tensor<float>&, float);
template Var<double> focal_frequency_loss<double>(const Var<double>&, const Tensor<double>&,
                                                  double);

}  // namespace vidctl::core::ops
