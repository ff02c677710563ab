#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vidctl/core/ops.hpp"
#include "vidctl/core/rng.hpp"

namespace vidctl::nn {

using core::Shape;
using core::Tensor;
using core::Var;

// Named parameter registry. Layers register their tensors here so the
// optimizer, EMA tracker, and checkpoints all see one flat, ordered tree.
template <typename T>
class ParamStore {
 public:
  Var<T> create(const std::string& name, Tensor<T> init) {
    return insert(name, std::move(init), /*trainable=*/true);
  }

  // Non-trainable state that still belongs in checkpoints (e.g. norm stats).
  Var<T> create_buffer(const std::string& name, Tensor<T> init) {
    return insert(name, std::move(init), /*trainable=*/false);
  }

  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return entries_; }

  Var<T> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
    return entries_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  int64_t num_trainable() const {
    int64_t n = 0;
    for (const auto& [name, v] : entries_)
      if (v->requires_grad) n += v->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, v] : entries_) v->zero_grad();
  }

  // name -> shape for every entry; used to detect mismatched trees.
  std::vector<std::pair<std::string, Shape>> tree() const {
    std::vector<std::pair<std::string, Shape>> t;
    t.reserve(entries_.size());
    for (const auto& [name, v] : entries_) t.emplace_back(name, v->value.shape());
    return t;
  }

 private:
  Var<T> insert(const std::string& name, Tensor<T> init, bool trainable) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    auto v = core::make_leaf<T>(std::move(init), trainable, name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, v);
    return v;
  }

  std::vector<std::pair<std::string, Var<T>>> entries_;
  std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------- init

template <typename T>
Tensor<T> uniform_init(Shape shape, T bound, core::Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.uniform(-static_cast<double>(bound), static_cast<double>(bound)));
  return t;
}

// Fan-in scaled uniform init, the usual conv/linear default.
template <typename T>
Tensor<T> kaiming_init(Shape shape, int64_t fan_in, core::Rng& rng) {
  return uniform_init<T>(std::move(shape), static_cast<T>(1.0 / std::sqrt(double(fan_in))), rng);
}

// ---------------------------------------------------------------- layers

template <typename T>
struct Linear {
  Var<T> w, b;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, core::Rng& rng,
         bool bias = true) {
    w = ps.create(name + ".w", kaiming_init<T>({out, in}, in, rng));
    if (bias) b = ps.create(name + ".b", kaiming_init<T>({out}, in, rng));
  }

  Var<T> forward(const Var<T>& x) const { return core::ops::linear(x, w, b); }
};

template <typename T>
struct Conv2d {
  Var<T> w, b;
  int64_t stride = 1, pad = 0, groups = 1;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, int64_t k,
         int64_t stride_, int64_t pad_, core::Rng& rng, int64_t groups_ = 1, bool bias = true)
      : stride(stride_), pad(pad_), groups(groups_) {
    const int64_t fan_in = (in / groups) * k * k;
    w = ps.create(name + ".w", kaiming_init<T>({out, in / groups, k, k}, fan_in, rng));
    if (bias) b = ps.create(name + ".b", kaiming_init<T>({out}, fan_in, rng));
  }

  Var<T> forward(const Var<T>& x) const {
    return core::ops::conv2d(x, w, b, stride, pad, groups);
  }
};

template <typename T>
struct ConvTranspose2d {
  Var<T> w, b;
  int64_t stride = 2, pad = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, int64_t k,
                  int64_t stride_, int64_t pad_, core::Rng& rng)
      : stride(stride_), pad(pad_) {
    const int64_t fan_in = in * k * k;
    w = ps.create(name + ".w", kaiming_init<T>({in, out, k, k}, fan_in, rng));
    b = ps.create(name + ".b", kaiming_init<T>({out}, fan_in, rng));
  }

  Var<T> forward(const Var<T>& x) const {
    return core::ops::conv_transpose2d(x, w, b, stride, pad);
  }
};

template <typename T>
struct Conv3d {
  Var<T> w, b;
  int64_t sd = 1, sh = 1, sw = 1, pd = 0, ph = 0, pw = 0, groups = 1;

  Conv3d() = default;
  Conv3d(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out,
         std::array<int64_t, 3> k, std::array<int64_t, 3> s, std::array<int64_t, 3> p,
         core::Rng& rng, int64_t groups_ = 1, bool bias = true)
      : sd(s[0]), sh(s[1]), sw(s[2]), pd(p[0]), ph(p[1]), pw(p[2]), groups(groups_) {
    const int64_t fan_in = (in / groups) * k[0] * k[1] * k[2];
    w = ps.create(name + ".w",
                  kaiming_init<T>({out, in / groups, k[0], k[1], k[2]}, fan_in, rng));
    if (bias) b = ps.create(name + ".b", kaiming_init<T>({out}, fan_in, rng));
  }

  Var<T> forward(const Var<T>& x) const {
    return core::ops::conv3d(x, w, b, sd, sh, sw, pd, ph, pw, groups);
  }
};

template <typename T>
struct GroupNorm {
  Var<T> gamma, beta;
  int64_t groups = 1;
  T eps = T(1e-5);

  GroupNorm() = default;
  GroupNorm(ParamStore<T>& ps, const std::string& name, int64_t channels, int64_t groups_,
            bool affine = true)
      : groups(groups_) {
    if (affine) {
      gamma = ps.create(name + ".gamma", Tensor<T>::full({channels}, T(1)));
      beta = ps.create(name + ".beta", Tensor<T>::zeros({channels}));
    }
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> y = core::ops::group_norm(x, groups, eps);
    if (gamma) {
      y = core::ops::scale_channels(y, gamma);
      y = core::ops::add_bias_channels(y, beta);
    }
    return y;
  }
};

// Batch norm with externally managed (frozen) statistics. Statistics live in
// buffers and are never touched by the optimizer; only gamma/beta train.
template <typename T>
struct FrozenBatchNorm {
  Var<T> gamma, beta, running_mean, running_var;
  T eps = T(1e-5);

  FrozenBatchNorm() = default;
  FrozenBatchNorm(ParamStore<T>& ps, const std::string& name, int64_t channels) {
    gamma = ps.create(name + ".gamma", Tensor<T>::full({channels}, T(1)));
    beta = ps.create(name + ".beta", Tensor<T>::zeros({channels}));
    running_mean = ps.create_buffer(name + ".running_mean", Tensor<T>::zeros({channels}));
    running_var = ps.create_buffer(name + ".running_var", Tensor<T>::full({channels}, T(1)));
  }

  Var<T> forward(const Var<T>& x) const {
    const int64_t c = x->value.shape()[1];
    Tensor<T> scale({c}), shift({c});
    for (int64_t i = 0; i < c; ++i) {
      const T rs = T(1) / std::sqrt(running_var->value[i] + eps);
      scale[i] = rs;
      shift[i] = -running_mean->value[i] * rs;
    }
    Var<T> y = core::ops::scale_channels(x, core::constant(std::move(scale)));
    y = core::ops::add_bias_channels(y, core::constant(std::move(shift)));
    y = core::ops::scale_channels(y, gamma);
    return core::ops::add_bias_channels(y, beta);
  }
};

// Conditional group normalization with macroblock-wise affine maps predicted
// from the condition embedding z (a spatial feature transform). The affine
// maps are upsampled with nearest-neighbor interpolation to the feature
// resolution, the scale goes through a Softplus.
template <typename T>
struct CondGroupNorm2d {
  Conv2d<T> xi_mu, xi_sigma;
  int64_t groups = 1;

  CondGroupNorm2d() = default;
  CondGroupNorm2d(ParamStore<T>& ps, const std::string& name, int64_t channels, int64_t cond_dim,
                  int64_t groups_, core::Rng& rng)
      : groups(groups_) {
    xi_mu = Conv2d<T>(ps, name + ".xi_mu", cond_dim, channels, 1, 1, 0, rng);
    xi_sigma = Conv2d<T>(ps, name + ".xi_sigma", cond_dim, channels, 1, 1, 0, rng);
  }

  // x: [N, C, H, W], z: [N, Cz, hz, wz] with H = r*hz, W = r*wz.
  Var<T> forward(const Var<T>& x, const Var<T>& z) const {
    namespace ops = core::ops;
    const int64_t xh = x->value.dim(2), zh = z->value.dim(2);
    if (xh % zh != 0 || x->value.dim(3) % z->value.dim(3) != 0)
      throw std::invalid_argument("CondGroupNorm2d: feature dims not a multiple of cond dims");
    const int64_t r = xh / zh;
    Var<T> scale = ops::softplus(xi_mu.forward(z));
    Var<T> shift = xi_sigma.forward(z);
    if (r > 1) {
      scale = ops::upsample_nearest2d(scale, r);
      shift = ops::upsample_nearest2d(shift, r);
    }
    Var<T> y = ops::group_norm(x, groups);
    return ops::add(ops::mul(scale, y), shift);
  }
};

// Conditional group normalization for a per-clip (vector) condition: the
// affine pair is predicted per channel and broadcast over all positions.
template <typename T>
struct CondGroupNormVec {
  Linear<T> xi_mu, xi_sigma;
  int64_t groups = 1;

  CondGroupNormVec() = default;
  CondGroupNormVec(ParamStore<T>& ps, const std::string& name, int64_t channels, int64_t cond_dim,
                   int64_t groups_, core::Rng& rng)
      : groups(groups_) {
    xi_mu = Linear<T>(ps, name + ".xi_mu", cond_dim, channels, rng);
    xi_sigma = Linear<T>(ps, name + ".xi_sigma", cond_dim, channels, rng);
  }

  // x: [N, C, ...], z: [N, Cz]
  Var<T> forward(const Var<T>& x, const Var<T>& z) const {
    namespace ops = core::ops;
    Var<T> scale = ops::softplus(xi_mu.forward(z));
    Var<T> shift = xi_sigma.forward(z);
    Var<T> y = ops::group_norm(x, groups);
    return ops::add_channels(ops::mul_channels(y, scale), shift);
  }
};

// Multi-head cross attention for small token counts. q: [nq, dq],
// k/v source: [nk, dkv]; output [nq, d_out].
template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int64_t heads = 1, d_model = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int64_t dq, int64_t dkv,
                     int64_t d_model_, int64_t heads_, int64_t d_out, core::Rng& rng)
      : heads(heads_), d_model(d_model_) {
    if (d_model % heads != 0) throw std::invalid_argument("MHA: d_model % heads != 0");
    wq = Linear<T>(ps, name + ".wq", dq, d_model, rng);
    wk = Linear<T>(ps, name + ".wk", dkv, d_model, rng);
    wv = Linear<T>(ps, name + ".wv", dkv, d_model, rng);
    wo = Linear<T>(ps, name + ".wo", d_model, d_out, rng);
  }

  Var<T> forward(const Var<T>& q, const Var<T>& kv) const {
    namespace ops = core::ops;
    const int64_t dh = d_model / heads;
    Var<T> qp = wq.forward(q);
    Var<T> kp = wk.forward(kv);
    Var<T> vp = wv.forward(kv);
    std::vector<Var<T>> ctx;
    ctx.reserve(heads);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    for (int64_t h = 0; h < heads; ++h) {
      Var<T> qh = ops::slice(qp, 1, h * dh, dh);
      Var<T> kh = ops::slice(kp, 1, h * dh, dh);
      Var<T> vh = ops::slice(vp, 1, h * dh, dh);
      Var<T> scores = ops::mul_scalar(ops::matmul(qh, kh, false, true), inv_sqrt);
      Var<T> attn = ops::softmax(scores, 1);
      ctx.push_back(ops::matmul(attn, vh));
    }
    return wo.forward(ops::concat(ctx, 1));
  }
};

// x * sigmoid(x)
template <typename T>
core::Var<T> swish(const core::Var<T>& x) {
  return core::ops::mul(x, core::ops::sigmoid(x));
}

}  // namespace vidctl::nn
