#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/codec/qp_map.hpp"
#include "vidctl/nn/nn.hpp"

namespace vidctl::control {

// Lightweight video control network: an efficient 3D-conv backbone (inverted
// bottlenecks with squeeze-excitation, X3D-S-like) with the classification
// head replaced by two bandwidth-conditioned 3D residual blocks and a
// per-macroblock QP logit layer.
struct ControlConfig {
  int64_t stem_channels = 24;
  std::array<int64_t, 4> stage_channels{24, 48, 96, 192};
  std::array<int, 4> stage_depths{3, 5, 11, 7};
  double expansion = 2.25;
  int64_t cond_dim = 64;    // bandwidth embedding width
  int64_t gn_groups = 4;    // head normalization groups
  double bw_lo = 30e3, bw_hi = 900e3;  // standardization range (bit/s)
  double tau_start = 2.0, tau_end = 0.1;
  double ema_decay = 0.99;
  int64_t param_budget = 4'000'000;

  static ControlConfig paper_scale();
  static ControlConfig desk_scale();
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ControlConfig from_map(const std::map<std::string, std::string>& m);
};

class ControlNet {
 public:
  ControlNet(const ControlConfig& cfg, uint64_t seed);

  const ControlConfig& config() const { return cfg_; }
  nn::ParamStore<float>& params() { return ps_; }
  const nn::ParamStore<float>& params() const { return ps_; }

  // clip [T, 3, H, W], bandwidth in bit/s -> logits [52, T, H/16, W/16]
  core::Var<float> forward(const core::Var<float>& clip, double bandwidth_bps) const;

  // Hard argmax inference path (no sampling, no surrogate involved).
  codec::QpMap infer_qp(const core::Tensor<float>& clip_frames, double bandwidth_bps) const;

  // Parameters split for the two optimizer groups.
  std::vector<core::Var<float>> backbone_parameters() const;
  std::vector<core::Var<float>> head_parameters() const;

 private:
  struct Impl;
  ControlConfig cfg_;
  nn::ParamStore<float> ps_;
  std::shared_ptr<Impl> impl_;
};

// Cosine Gumbel temperature schedule from tau_start down to tau_end.
double tau_at(const ControlConfig& cfg, int64_t step, int64_t total_steps);

// Relaxed categorical sample over the QP axis (axis 0 of [52, T, h, w]).
// hard = one-hot at the relaxed argmax with a straight-through gradient.
core::Var<float> gumbel_softmax(const core::Var<float>& logits, double tau, bool hard,
                                core::Rng& rng);

void save_control(const std::string& path, ControlNet& net,
                  const std::string& kind = "control");
std::unique_ptr<ControlNet> load_control(const std::string& path);

}  // namespace vidctl::control
