#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vidctl/control/model.hpp"
#include "vidctl/nn/optim.hpp"
#include "vidctl/surrogate/pretrain.hpp"
#include "vidctl/train/losses.hpp"
#include "vidctl/util/table.hpp"

namespace vidctl::train {

struct TrainControlConfig {
  int64_t steps = 1000;  // outer iterations: control step then surrogate step
  int64_t batch_size = 2;
  ControlLossWeights weights;
  BandwidthSampler bandwidth;
  double head_lr = 1e-4;
  double backbone_lr = 1e-5;
  double weight_decay = 1e-3;
  double surrogate_lr = 1e-4;  // fixed during the interleave
  bool hard_gumbel = true;
  bool surrogate_interleave = true;
  double control_qp_mix = 0.5;  // fraction of surrogate-step QPs from the control
  double p_temporal_share = 0.4;
  uint64_t seed = 1;
  int64_t log_every = 10;
};

struct StepMetrics {
  double loss = 0, l_b = 0, l_p = 0, l_r = 0;
  double b = 0, b_tilde = 0, tau = 0, gate = 0;
  double surrogate_loss = 0;
};

// Temporarily drops requires_grad on every trainable entry of a store so a
// backward pass cannot deposit gradients there; restores on destruction.
class FreezeGuard {
 public:
  explicit FreezeGuard(nn::ParamStore<float>& ps) {
    for (auto& [name, v] : ps.entries())
      if (v->requires_grad) {
        frozen_.push_back(v);
        v->requires_grad = false;
      }
  }
  ~FreezeGuard() {
    for (auto& v : frozen_) v->requires_grad = true;
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<core::Var<float>> frozen_;
};

class Trainer {
 public:
  Trainer(control::ControlNet& net, control::ControlNet& ema_net,
          surrogate::SurrogateNet<float>& surrogate, const codec::CodecBridge& bridge,
          vision::DownstreamModel& downstream, std::vector<clips::VideoClip> dataset,
          const TrainControlConfig& cfg);

  // One control update per the self-supervised objective (surrogate and
  // downstream parameters are isolated from the backward pass).
  StepMetrics train_step_control(int64_t step);

  // One surrogate fine-tuning step on freshly labeled (clip, QP) pairs.
  double train_step_surrogate(int64_t step);

  // Full alternating schedule; logs line metrics when a writer is given.
  void run(util::TableWriter* metrics);

  core::Rng& rng() { return rng_; }

 private:
  control::ControlNet& net_;
  control::ControlNet& ema_net_;
  surrogate::SurrogateNet<float>& surrogate_;
  const codec::CodecBridge& bridge_;
  vision::DownstreamModel& downstream_;
  std::vector<clips::VideoClip> dataset_;
  TrainControlConfig cfg_;
  core::Rng rng_;
  nn::AdamW<float> control_opt_;
  nn::AdamW<float> surrogate_opt_;
  nn::CosineSchedule control_sched_;

  const clips::VideoClip& pick_clip();
};

}  // namespace vidctl::train
