#include "vidctl/train/loop.hpp"

#include <cmath>

#include "vidctl/nn/optim.hpp"
#include "vidctl/surrogate/losses.hpp"

namespace vidctl::train {

namespace ops = core::ops;
using core::Tensor;
using core::Var;

double bandwidth_from_bytes(const std::vector<int64_t>& sizes, double fps, int stride) {
  return codec::realized_bitrate(sizes, fps, static_cast<int64_t>(sizes.size()), stride);
}

double bandwidth_from_bytes(const std::vector<double>& sizes, double fps, int stride) {
  double total = 0;
  for (double s : sizes) total += s;
  return 8.0 * total * fps / (static_cast<double>(sizes.size()) * stride);
}

namespace {

nn::AdamW<float> make_control_opt(control::ControlNet& net, const TrainControlConfig& cfg) {
  std::vector<nn::AdamW<float>::Group> groups;
  groups.push_back({net.head_parameters(), 1.0, cfg.weight_decay});
  groups.push_back({net.backbone_parameters(), cfg.backbone_lr / cfg.head_lr, cfg.weight_decay});
  return nn::AdamW<float>(std::move(groups), cfg.head_lr);
}

nn::AdamW<float> make_surrogate_opt(surrogate::SurrogateNet<float>& net,
                                    const TrainControlConfig& cfg) {
  std::vector<Var<float>> params;
  for (auto& [name, v] : net.params().entries())
    if (v->requires_grad) params.push_back(v);
  return nn::AdamW<float>({{params, 1.0, 1e-5}}, cfg.surrogate_lr);
}

}  // namespace

Trainer::Trainer(control::ControlNet& net, control::ControlNet& ema_net,
                 surrogate::SurrogateNet<float>& surrogate, const codec::CodecBridge& bridge,
                 vision::DownstreamModel& downstream, std::vector<clips::VideoClip> dataset,
                 const TrainControlConfig& cfg)
    : net_(net),
      ema_net_(ema_net),
      surrogate_(surrogate),
      bridge_(bridge),
      downstream_(downstream),
      dataset_(std::move(dataset)),
      cfg_(cfg),
      rng_(cfg.seed),
      control_opt_(make_control_opt(net, cfg)),
      surrogate_opt_(make_surrogate_opt(surrogate, cfg)),
      control_sched_{cfg.head_lr, cfg.steps, 0, 0.0} {
  cfg_.weights.validate();
  if (dataset_.empty()) throw util::ContractError("Trainer: empty dataset");
  if (!downstream_.frozen()) throw util::ContractError("Trainer: downstream model must be frozen");
  nn::copy_params(net_.params(), ema_net_.params());
}

const clips::VideoClip& Trainer::pick_clip() {
  return dataset_[rng_.uniform_int(0, static_cast<int64_t>(dataset_.size()) - 1)];
}

StepMetrics Trainer::train_step_control(int64_t step) {
  StepMetrics m;
  m.tau = control::tau_at(net_.config(), step, cfg_.steps);

  // surrogate provides gradients but receives none in this step
  FreezeGuard freeze_surrogate(surrogate_.params());

  std::vector<Var<float>> losses;
  double acc_b = 0, acc_bt = 0, acc_gate = 0, acc_lb = 0, acc_lp = 0, acc_lr = 0;
  for (int64_t bi = 0; bi < cfg_.batch_size; ++bi) {
    const clips::VideoClip& clip = pick_clip();
    const double b = cfg_.bandwidth.sample(rng_);
    auto clip_var = core::constant(clip.frames);

    auto logits = net_.forward(clip_var, b);
    auto qp = control::gumbel_softmax(logits, m.tau, cfg_.hard_gumbel, rng_);
    const auto& gop = bridge_.gop_fixture(clip.length(), clip.height(), clip.width());
    auto out = surrogate_.forward(clip_var, qp, gop);
    auto b_tilde = bandwidth_from_log_sizes(out.log_sizes, clip.fps, clip.temporal_stride);
    const double bt_value = static_cast<double>(b_tilde->value[0]);

    Tensor<float> pseudo;
    {
      core::NoGradGuard ng;
      pseudo = downstream_.predict(clip_var)->value;
    }
    auto pred = downstream_.predict(out.frames);
    const double gate = heaviside_gate(b, bt_value, cfg_.weights.eps_p);

    auto l_b = bandwidth_loss(b_tilde, b, cfg_.weights.eps_p);
    auto l_p = performance_loss(pred, pseudo, gate, downstream_.task());
    auto l_r = bandwidth_regularizer(b_tilde, b, cfg_.weights.eps_r);
    ControlLossReport rep;
    losses.push_back(control_loss(l_b, l_p, l_r, cfg_.weights, &rep));

    acc_b += b;
    acc_bt += bt_value;
    acc_gate += gate;
    acc_lb += rep.l_b;
    acc_lp += rep.l_p;
    acc_lr += rep.l_r;
  }
  auto total = ops::mul_scalar(ops::sum_all(ops::concat(losses, 0)),
                               1.0f / static_cast<float>(cfg_.batch_size));
  if (!std::isfinite(static_cast<double>(total->value[0])))
    throw util::ContractError("train_step_control: non-finite loss at step " +
                              std::to_string(step));

  net_.params().zero_grad();
  surrogate_.params().zero_grad();
  core::backward(total);
  control_opt_.set_lr(control_sched_.lr_at(step));
  control_opt_.step();
  nn::ema_update(net_.params(), ema_net_.params(),
                 static_cast<float>(net_.config().ema_decay));

  const double inv = 1.0 / cfg_.batch_size;
  m.loss = total->value[0];
  m.l_b = acc_lb * inv;
  m.l_p = acc_lp * inv;
  m.l_r = acc_lr * inv;
  m.b = acc_b * inv;
  m.b_tilde = acc_bt * inv;
  m.gate = acc_gate * inv;
  return m;
}

double Trainer::train_step_surrogate(int64_t step) {
  std::vector<typename surrogate::SurrogateNet<float>::Output> preds;
  std::vector<codec::CodedClip> coded;
  std::vector<const codec::CodedClip*> coded_ptrs;
  for (int64_t bi = 0; bi < cfg_.batch_size; ++bi) {
    const clips::VideoClip& clip = pick_clip();
    const int64_t mb_h = clip.height() / codec::kMacroblock;
    const int64_t mb_w = clip.width() / codec::kMacroblock;
    codec::QpMap qp;
    if (rng_.bernoulli(cfg_.control_qp_mix)) {
      // detached control outputs: hard argmax at a sampled condition
      qp = net_.infer_qp(clip.frames, cfg_.bandwidth.sample(rng_));
    } else {
      // full-range sampler (the post-curriculum regime)
      qp = surrogate::sample_qp_curriculum(cfg_.steps, cfg_.steps, clip.length(), mb_h, mb_w,
                                           cfg_.p_temporal_share, rng_);
    }
    coded.push_back(bridge_.encode_decode(clip, qp));
    const auto& gop = bridge_.gop_fixture(clip.length(), clip.height(), clip.width());
    auto qp_oh = surrogate::QpOneHot<float>::from_map(qp);
    preds.push_back(surrogate_.forward(core::constant(clip.frames),
                                       core::constant(qp_oh.values), gop));
  }
  for (auto& c : coded) coded_ptrs.push_back(&c);
  auto loss = surrogate::surrogate_loss<float>(preds, coded_ptrs, surrogate_.config());
  if (!std::isfinite(loss.report.total))
    throw util::ContractError("train_step_surrogate: non-finite loss at step " +
                              std::to_string(step));
  surrogate_.params().zero_grad();
  net_.params().zero_grad();
  core::backward(loss.total);
  surrogate_opt_.step();  // fixed lr
  return loss.report.total;
}

void Trainer::run(util::TableWriter* metrics) {
  for (int64_t step = 0; step < cfg_.steps; ++step) {
    StepMetrics m = train_step_control(step);
    if (cfg_.surrogate_interleave) m.surrogate_loss = train_step_surrogate(step);
    if (metrics && (step % cfg_.log_every == 0 || step + 1 == cfg_.steps)) {
      metrics->row({std::to_string(step), util::fmt_num(m.loss), util::fmt_num(m.l_b),
                    util::fmt_num(m.l_p), util::fmt_num(m.l_r), util::fmt_num(m.b),
                    util::fmt_num(m.b_tilde), util::fmt_num(m.tau), util::fmt_num(m.gate),
                    util::fmt_num(m.surrogate_loss)});
    }
  }
}

}  // namespace vidctl::train
