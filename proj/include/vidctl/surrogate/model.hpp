#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vidctl/codec/bridge.hpp"
#include "vidctl/nn/nn.hpp"
#include "vidctl/surrogate/flow.hpp"
#include "vidctl/surrogate/qp_onehot.hpp"

namespace vidctl::surrogate {

// Differentiable stand-in for the codec: predicts decoded frames and
// per-frame log10 file sizes from (clip, relaxed QP one-hot), conditioned
// through CGN layers, with a frame-type aware recurrent bottleneck.
struct SurrogateConfig {
  std::array<int64_t, 4> enc_channels{64, 128, 256, 1024};
  std::array<int64_t, 4> dec_channels{512, 256, 128, 64};
  int64_t cond_dim = 256;  // C_z
  int agru_iterations = 8;
  int64_t token_dim = 256;  // C_t
  int attn_heads = 4;
  int64_t gn_groups = 8;
  int64_t flow_width = 32;
  bool finetune_flow = true;

  // loss weights (surrogate pre-training and fine-tuning)
  double a_rho_v = 1e-4, a_ssim = 2.0, a_ff = 200.0, a_rho_f = 1e-4, a_l1 = 0.1;

  static SurrogateConfig paper_scale();
  static SurrogateConfig desk_scale();
  static SurrogateConfig tiny();  // gradient-check scale

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static SurrogateConfig from_map(const std::map<std::string, std::string>& m);
};

namespace detail {

// Encoder/decoder residual block: conv -> CGN -> lrelu -> conv -> GN,
// residual projection, final lrelu. The encoder flavour downsamples with a
// strided 3x3, the decoder flavour upsamples with a 4x4 transposed conv and
// concatenates a skip input before the second conv.
template <typename T>
struct EncBlock {
  nn::Conv2d<T> conv1, conv2, proj;
  nn::CondGroupNorm2d<T> cgn;
  nn::GroupNorm<T> gn;

  EncBlock() = default;
  EncBlock(nn::ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cout,
           int64_t cond_dim, int64_t groups, core::Rng& rng) {
    conv1 = nn::Conv2d<T>(ps, name + ".conv1", cin, cout, 3, 2, 1, rng);
    conv2 = nn::Conv2d<T>(ps, name + ".conv2", cout, cout, 3, 1, 1, rng);
    proj = nn::Conv2d<T>(ps, name + ".proj", cin, cout, 1, 2, 0, rng);
    cgn = nn::CondGroupNorm2d<T>(ps, name + ".cgn", cout, cond_dim, groups, rng);
    gn = nn::GroupNorm<T>(ps, name + ".gn", cout, groups);
  }

  core::Var<T> forward(const core::Var<T>& x, const core::Var<T>& z) const {
    namespace ops = core::ops;
    auto h = cgn.forward(conv1.forward(x), z);
    h = ops::leaky_relu(h, T(0.1));
    h = gn.forward(conv2.forward(h));
    return ops::leaky_relu(ops::add(h, proj.forward(x)), T(0.1));
  }
};

template <typename T>
struct DecBlock {
  nn::ConvTranspose2d<T> up;
  nn::Conv2d<T> conv2, proj;
  nn::CondGroupNorm2d<T> cgn;
  nn::GroupNorm<T> gn;
  bool has_skip = false;

  DecBlock() = default;
  DecBlock(nn::ParamStore<T>& ps, const std::string& name, int64_t cin, int64_t cskip,
           int64_t cout, int64_t cond_dim, int64_t groups, core::Rng& rng)
      : has_skip(cskip > 0) {
    up = nn::ConvTranspose2d<T>(ps, name + ".up", cin, cout, 4, 2, 1, rng);
    conv2 = nn::Conv2d<T>(ps, name + ".conv2", cout + cskip, cout, 3, 1, 1, rng);
    proj = nn::Conv2d<T>(ps, name + ".proj", cin, cout, 1, 1, 0, rng);
    cgn = nn::CondGroupNorm2d<T>(ps, name + ".cgn", cout, cond_dim, groups, rng);
    gn = nn::GroupNorm<T>(ps, name + ".gn", cout, groups);
  }

  core::Var<T> forward(const core::Var<T>& x, const core::Var<T>& skip,
                       const core::Var<T>& z) const {
    namespace ops = core::ops;
    auto h = cgn.forward(up.forward(x), z);
    h = ops::leaky_relu(h, T(0.1));
    if (has_skip) h = ops::concat<T>({h, skip}, 1);
    h = gn.forward(conv2.forward(h));
    auto res = proj.forward(ops::upsample_nearest2d(x, 2));
    return ops::leaky_relu(ops::add(h, res), T(0.1));
  }
};

// One frame-type's aligned convolutional GRU cell (Eq-style gating):
//   Z = sigmoid(CGN(C3(H) + C3(refs), z))
//   R = sigmoid(GN(C1(H) + C1(refs)))
//   Hbar = tanh(GN(C1(R*H) + C1(refs)))
//   H' = (1-Z)*H + Z*Hbar
// I-frame cells take no reference input and drop the ref convolutions.
template <typename T>
struct AgruCell {
  nn::Conv2d<T> z_h, z_r, r_h, r_r, c_h, c_r;
  nn::CondGroupNorm2d<T> z_cgn;
  nn::GroupNorm<T> r_gn, c_gn;
  int refs = 0;

  AgruCell() = default;
  AgruCell(nn::ParamStore<T>& ps, const std::string& name, int64_t k, int refs_,
           int64_t cond_dim, int64_t groups, core::Rng& rng)
      : refs(refs_) {
    z_h = nn::Conv2d<T>(ps, name + ".z_h", k, k, 3, 1, 1, rng);
    r_h = nn::Conv2d<T>(ps, name + ".r_h", k, k, 1, 1, 0, rng);
    c_h = nn::Conv2d<T>(ps, name + ".c_h", k, k, 1, 1, 0, rng);
    if (refs > 0) {
      z_r = nn::Conv2d<T>(ps, name + ".z_r", refs * k, k, 3, 1, 1, rng);
      r_r = nn::Conv2d<T>(ps, name + ".r_r", refs * k, k, 1, 1, 0, rng);
      c_r = nn::Conv2d<T>(ps, name + ".c_r", refs * k, k, 1, 1, 0, rng);
    }
    z_cgn = nn::CondGroupNorm2d<T>(ps, name + ".z_cgn", k, cond_dim, groups, rng);
    r_gn = nn::GroupNorm<T>(ps, name + ".r_gn", k, groups);
    c_gn = nn::GroupNorm<T>(ps, name + ".c_gn", k, groups);
  }

  core::Var<T> step(const core::Var<T>& h, const core::Var<T>& ref_cat, const core::Var<T>& z,
                    const core::Var<T>* forced_update_gate = nullptr) const {
    namespace ops = core::ops;
    auto maybe_ref = [&](const nn::Conv2d<T>& conv_r, core::Var<T> base) {
      if (refs > 0) base = ops::add(base, conv_r.forward(ref_cat));
      return base;
    };
    core::Var<T> gate;
    if (forced_update_gate) {
      gate = *forced_update_gate;
    } else {
      gate = ops::sigmoid(z_cgn.forward(maybe_ref(z_r, z_h.forward(h)), z));
    }
    auto reset = ops::sigmoid(r_gn.forward(maybe_ref(r_r, r_h.forward(h))));
    auto cand =
        ops::tanh(c_gn.forward(maybe_ref(c_r, c_h.forward(ops::mul(reset, h)))));
    auto keep = ops::mul(ops::add_scalar(ops::neg(gate), T(1)), h);
    return ops::add(keep, ops::mul(gate, cand));
  }
};

// Cross-attention file-size head: one learnable query token per frame type
// attends over a frame's bottleneck features (no positional encoding) and a
// linear readout regresses log10 bytes.
template <typename T>
struct FileSizeHead {
  core::Var<T> tokens;  // [3, C_t]: I, P, B
  nn::MultiHeadAttention<T> mha;
  nn::Linear<T> readout;

  FileSizeHead() = default;
  FileSizeHead(nn::ParamStore<T>& ps, const std::string& name, int64_t k, int64_t token_dim,
               int heads, core::Rng& rng) {
    tokens = ps.create(name + ".tokens", nn::uniform_init<T>({3, token_dim}, T(0.5), rng));
    mha = nn::MultiHeadAttention<T>(ps, name + ".mha", token_dim, k, token_dim, heads, token_dim,
                                    rng);
    readout = nn::Linear<T>(ps, name + ".readout", token_dim, 1, rng);
  }

  // h: [1, K, h, w] bottleneck features of one frame -> scalar [1]
  core::Var<T> forward(const core::Var<T>& h, char type) const {
    namespace ops = core::ops;
    const int64_t k = h->value.dim(1), hw = h->value.dim(2) * h->value.dim(3);
    auto feat = ops::permute(ops::reshape(h, {k, hw}), {1, 0});  // [hw, K]
    const int64_t idx = type == 'I' ? 0 : (type == 'P' ? 1 : 2);
    auto q = ops::slice(tokens, 0, idx, 1);  // [1, C_t]
    auto ctx = ops::leaky_relu(mha.forward(q, feat), T(0.1));
    return ops::reshape(readout.forward(ctx), {1});
  }
};

}  // namespace detail

template <typename T>
class SurrogateNet {
 public:
  struct Output {
    core::Var<T> frames;     // [T, 3, H, W], sigmoid range
    core::Var<T> log_sizes;  // [T], log10 bytes
  };

  SurrogateNet(const SurrogateConfig& cfg, uint64_t seed);

  const SurrogateConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return ps_; }
  const nn::ParamStore<T>& params() const { return ps_; }

  // Tests may swap in analytic flow estimators; non-owning.
  void set_flow_estimator(FlowEstimator<T>* est) { flow_override_ = est; }
  FlowEstimator<T>* flow_estimator() const {
    return flow_override_ ? flow_override_ : flow_net_.get();
  }

  // [52, T, h, w] simplex -> [T, C_z, h, w] position-wise two-layer MLP
  core::Var<T> embed_qp(const core::Var<T>& qp_onehot) const;

  // Warps reference features to the target frame through the estimated flow,
  // downsampled (and rescaled) to the feature resolution.
  core::Var<T> align_features(const core::Var<T>& ref_features, const core::Var<T>& target_frame,
                              const core::Var<T>& ref_frame) const;

  // Exposed single AGRU update, mainly for direct unit tests.
  core::Var<T> agru_step(char type, const core::Var<T>& h, const core::Var<T>& ref_cat,
                         const core::Var<T>& z,
                         const core::Var<T>* forced_update_gate = nullptr) const;

  Output forward(const core::Var<T>& clip, const core::Var<T>& qp_onehot,
                 const codec::GopStructure& gop) const;

 private:
  SurrogateConfig cfg_;
  nn::ParamStore<T> ps_;
  nn::Conv2d<T> embed1_, embed2_;
  std::vector<detail::EncBlock<T>> enc_;
  std::vector<detail::DecBlock<T>> dec_;
  nn::Conv2d<T> out_conv_;
  detail::AgruCell<T> agru_i_, agru_p_, agru_b_;
  detail::FileSizeHead<T> fs_head_;
  std::unique_ptr<TinyFlowNet<T>> flow_net_;
  FlowEstimator<T>* flow_override_ = nullptr;
};

}  // namespace vidctl::surrogate
