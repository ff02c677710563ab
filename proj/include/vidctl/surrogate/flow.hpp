#pragma once

#include <memory>

#include "vidctl/nn/nn.hpp"

namespace vidctl::surrogate {

// Dense optical flow between frame pairs, pluggable so tests can inject
// analytic estimators. flow(target, reference) maps [N,3,H,W] x [N,3,H,W] to
// [N,2,H,W] displacements in pixels: reference sampled at p + flow(p)
// reconstructs the target (backward warping convention).
template <typename T>
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual core::Var<T> flow(const core::Var<T>& target, const core::Var<T>& reference) = 0;
};

template <typename T>
class ZeroFlow : public FlowEstimator<T> {
 public:
  core::Var<T> flow(const core::Var<T>& target, const core::Var<T>& reference) override {
    const auto& s = target->value.shape();
    return core::constant(core::Tensor<T>::zeros({s[0], 2, s[2], s[3]}));
  }
};

// Constant translation, for warp/alignment oracles.
template <typename T>
class TranslationFlow : public FlowEstimator<T> {
 public:
  TranslationFlow(T dx, T dy) : dx_(dx), dy_(dy) {}
  core::Var<T> flow(const core::Var<T>& target, const core::Var<T>& reference) override {
    const auto& s = target->value.shape();
    core::Tensor<T> f({s[0], 2, s[2], s[3]});
    const int64_t hw = s[2] * s[3];
    for (int64_t n = 0; n < s[0]; ++n)
      for (int64_t p = 0; p < hw; ++p) {
        f[n * 2 * hw + p] = dx_;
        f[n * 2 * hw + hw + p] = dy_;
      }
    return core::constant(f);
  }

 private:
  T dx_, dy_;
};

// Small learnable flow network operating at half resolution. Registers its
// parameters in the caller's store so the surrogate optimizer (optionally)
// fine-tunes them alongside everything else.
template <typename T>
class TinyFlowNet : public FlowEstimator<T> {
 public:
  TinyFlowNet(nn::ParamStore<T>& ps, const std::string& prefix, int64_t width, core::Rng& rng) {
    c1_ = nn::Conv2d<T>(ps, prefix + ".c1", 6, width, 5, 2, 2, rng);
    c2_ = nn::Conv2d<T>(ps, prefix + ".c2", width, width, 3, 1, 1, rng);
    c3_ = nn::Conv2d<T>(ps, prefix + ".c3", width, 2, 3, 1, 1, rng);
  }

  core::Var<T> flow(const core::Var<T>& target, const core::Var<T>& reference) override {
    namespace ops = core::ops;
    const int64_t h = target->value.dim(2), w = target->value.dim(3);
    auto x = ops::concat<T>({target, reference}, 1);
    auto f = ops::leaky_relu(c1_.forward(x), T(0.1));
    f = ops::leaky_relu(c2_.forward(f), T(0.1));
    f = c3_.forward(f);
    return ops::mul_scalar(ops::resize_bilinear(f, h, w), T(2));
  }

 private:
  nn::Conv2d<T> c1_, c2_, c3_;
};

}  // namespace vidctl::surrogate
