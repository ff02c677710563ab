#pragma once

#include <string>
#include <vector>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/surrogate/losses.hpp"
#include "vidctl/util/table.hpp"

namespace vidctl::surrogate {

struct PretrainConfig {
  int64_t steps = 2000;
  int64_t batch_size = 2;
  double base_lr = 4e-4;
  double weight_decay = 1e-5;
  int64_t warmup_steps = 100;
  double p_temporal_share = 0.4;  // share one QP map across all frames
  clips::AugmentConfig augment;
  uint64_t seed = 1;
  int64_t log_every = 25;
};

// Curriculum QP sampler: the lower bound of the sampled range starts at 51
// and reaches 0 at half of pre-training; maps are drawn on a random coarse
// grid and nearest-upsampled, optionally shared across frames.
codec::QpMap sample_qp_curriculum(int64_t step, int64_t total_steps, int64_t t, int64_t mb_h,
                                  int64_t mb_w, double p_temporal_share, core::Rng& rng);

struct PretrainResult {
  double final_loss = 0;
  int64_t steps_run = 0;
};

// Online-labeled pre-training: each step encodes the sampled (clip, QP)
// pairs through the real codec and fits the surrogate to the result.
PretrainResult pretrain_surrogate(SurrogateNet<float>& net,
                                  const std::vector<clips::VideoClip>& dataset,
                                  const codec::CodecBridge& bridge, const PretrainConfig& cfg,
                                  util::TableWriter* metrics = nullptr);

void save_surrogate(const std::string& path, SurrogateNet<float>& net);
std::unique_ptr<SurrogateNet<float>> load_surrogate(const std::string& path);

}  // namespace vidctl::surrogate
