#include "vidctl/surrogate/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "vidctl/nn/checkpoint.hpp"
#include "vidctl/nn/optim.hpp"

namespace vidctl::surrogate {

codec::QpMap sample_qp_curriculum(int64_t step, int64_t total_steps, int64_t t, int64_t mb_h,
                                  int64_t mb_w, double p_temporal_share, core::Rng& rng) {
  // range lower bound: 51 at step 0, 0 from total/2 onward
  const double frac = total_steps > 0 ? static_cast<double>(step) / total_steps : 1.0;
  const int lo = std::max(0, static_cast<int>(std::ceil(51.0 * (1.0 - 2.0 * frac))));

  // draw on a coarse grid and upsample to mimic region-uniform maps
  const int64_t max_factor = std::max<int64_t>(1, std::min(mb_h, mb_w));
  std::vector<int64_t> factors;
  for (int64_t f = 1; f <= max_factor; f *= 2) factors.push_back(f);
  const int64_t g = factors[rng.uniform_int(0, static_cast<int64_t>(factors.size()) - 1)];
  const int64_t gh = (mb_h + g - 1) / g, gw = (mb_w + g - 1) / g;

  const bool share = rng.bernoulli(p_temporal_share);
  codec::QpMap map;
  map.values = core::Tensor<int>({t, mb_h, mb_w});
  core::Tensor<int> coarse({gh, gw});
  for (int64_t ti = 0; ti < t; ++ti) {
    if (ti == 0 || !share)
      for (int64_t i = 0; i < coarse.numel(); ++i)
        coarse[i] = static_cast<int>(rng.uniform_int(lo, 51));
    for (int64_t y = 0; y < mb_h; ++y)
      for (int64_t x = 0; x < mb_w; ++x)
        map.values.at(ti, y, x) = coarse.at(y / g, x / g);
  }
  map.validate();
  return map;
}

PretrainResult pretrain_surrogate(SurrogateNet<float>& net,
                                  const std::vector<clips::VideoClip>& dataset,
                                  const codec::CodecBridge& bridge, const PretrainConfig& cfg,
                                  util::TableWriter* metrics) {
  if (dataset.empty()) throw util::ContractError("pretrain_surrogate: empty dataset");
  core::Rng rng(cfg.seed);

  std::vector<core::Var<float>> trainable;
  for (auto& [name, v] : net.params().entries())
    if (v->requires_grad) trainable.push_back(v);
  nn::AdamW<float> opt({{trainable, 1.0, cfg.weight_decay}}, cfg.base_lr);
  nn::CosineSchedule sched{cfg.base_lr, cfg.steps, cfg.warmup_steps, 0.0};

  PretrainResult result;
  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<typename SurrogateNet<float>::Output> preds;
    std::vector<codec::CodedClip> coded;
    std::vector<const codec::CodedClip*> coded_ptrs;
    coded.reserve(cfg.batch_size);
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
      const auto& base = dataset[rng.uniform_int(0, static_cast<int64_t>(dataset.size()) - 1)];
      clips::VideoClip clip = augment_for_surrogate(base, cfg.augment, rng);
      const int64_t mb_h = clip.height() / codec::kMacroblock;
      const int64_t mb_w = clip.width() / codec::kMacroblock;
      codec::QpMap qp = sample_qp_curriculum(step, cfg.steps, clip.length(), mb_h, mb_w,
                                             cfg.p_temporal_share, rng);
      coded.push_back(bridge.encode_decode(clip, qp));
      const auto& gop = bridge.gop_fixture(clip.length(), clip.height(), clip.width());
      auto qp_oh = QpOneHot<float>::from_map(qp);
      preds.push_back(net.forward(core::constant(clip.frames), core::constant(qp_oh.values),
                                  gop));
    }
    for (auto& c : coded) coded_ptrs.push_back(&c);
    auto loss = surrogate_loss<float>(preds, coded_ptrs, net.config());
    if (!std::isfinite(loss.report.total))
      throw util::ContractError("pretrain_surrogate: non-finite loss at step " +
                                std::to_string(step));

    net.params().zero_grad();
    core::backward(loss.total);
    opt.set_lr(sched.lr_at(step));
    opt.step();
    result.final_loss = loss.report.total;
    result.steps_run = step + 1;

    if (metrics && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      metrics->row({std::to_string(step), util::fmt_num(loss.report.total),
                    util::fmt_num(loss.report.rho_v), util::fmt_num(loss.report.ssim),
                    util::fmt_num(loss.report.ff), util::fmt_num(loss.report.rho_f),
                    util::fmt_num(loss.report.l1), util::fmt_num(sched.lr_at(step))});
    }
  }
  return result;
}

void save_surrogate(const std::string& path, SurrogateNet<float>& net) {
  nn::CheckpointMeta meta;
  meta.kind = "surrogate";
  meta.config = net.config().to_map();
  nn::save_checkpoint(path, meta, net.params());
}

std::unique_ptr<SurrogateNet<float>> load_surrogate(const std::string& path) {
  nn::CheckpointMeta meta = nn::read_checkpoint_meta(path);
  if (meta.kind != "surrogate")
    throw util::ContractError("checkpoint is not a surrogate: " + path);
  auto net = std::make_unique<SurrogateNet<float>>(SurrogateConfig::from_map(meta.config), 0);
  nn::load_checkpoint(path, net->params());
  return net;
}

}  // namespace vidctl::surrogate
