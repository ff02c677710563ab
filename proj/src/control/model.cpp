#include "vidctl/control/model.hpp"

#include <cmath>
#include <sstream>

#include "vidctl/nn/checkpoint.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::control {

namespace ops = core::ops;
using core::Tensor;
using core::Var;
using util::ContractError;

ControlConfig ControlConfig::paper_scale() { return ControlConfig{}; }

ControlConfig ControlConfig::desk_scale() {
  ControlConfig c;
  c.stem_channels = 8;
  c.stage_channels = {8, 12, 16, 24};
  c.stage_depths = {1, 1, 1, 1};
  c.expansion = 2.0;
  c.cond_dim = 16;
  c.gn_groups = 4;
  return c;
}

void ControlConfig::validate() const {
  if (stem_channels <= 0) throw ContractError("ControlConfig: stem_channels");
  for (int64_t c : stage_channels)
    if (c <= 0) throw ContractError("ControlConfig: stage channels must be positive");
  for (int d : stage_depths)
    if (d < 1) throw ContractError("ControlConfig: stage depths must be >= 1");
  if (stage_channels[3] % gn_groups != 0)
    throw ContractError("ControlConfig: last stage channels % gn_groups != 0");
  if (tau_start <= 0 || tau_end <= 0 || tau_end > tau_start)
    throw ContractError("ControlConfig: temperature schedule must be positive, non-increasing");
  if (ema_decay <= 0 || ema_decay >= 1) throw ContractError("ControlConfig: ema_decay in (0,1)");
  if (bw_lo <= 0 || bw_hi <= bw_lo) throw ContractError("ControlConfig: bandwidth range");
}

std::map<std::string, std::string> ControlConfig::to_map() const {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, auto v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    m[k] = ss.str();
  };
  put("stem", stem_channels);
  for (int i = 0; i < 4; ++i) put("stage_c" + std::to_string(i), stage_channels[i]);
  for (int i = 0; i < 4; ++i) put("stage_d" + std::to_string(i), stage_depths[i]);
  put("expansion", expansion);
  put("cond_dim", cond_dim);
  put("gn_groups", gn_groups);
  put("bw_lo", bw_lo);
  put("bw_hi", bw_hi);
  put("tau_start", tau_start);
  put("tau_end", tau_end);
  put("ema_decay", ema_decay);
  return m;
}

ControlConfig ControlConfig::from_map(const std::map<std::string, std::string>& m) {
  ControlConfig c;
  auto geti = [&](const std::string& k, int64_t d) {
    auto it = m.find(k);
    return it == m.end() ? d : std::stoll(it->second);
  };
  auto getd = [&](const std::string& k, double d) {
    auto it = m.find(k);
    return it == m.end() ? d : std::stod(it->second);
  };
  c.stem_channels = geti("stem", c.stem_channels);
  for (int i = 0; i < 4; ++i) c.stage_channels[i] = geti("stage_c" + std::to_string(i), c.stage_channels[i]);
  for (int i = 0; i < 4; ++i)
    c.stage_depths[i] = static_cast<int>(geti("stage_d" + std::to_string(i), c.stage_depths[i]));
  c.expansion = getd("expansion", c.expansion);
  c.cond_dim = geti("cond_dim", c.cond_dim);
  c.gn_groups = geti("gn_groups", c.gn_groups);
  c.bw_lo = getd("bw_lo", c.bw_lo);
  c.bw_hi = getd("bw_hi", c.bw_hi);
  c.tau_start = getd("tau_start", c.tau_start);
  c.tau_end = getd("tau_end", c.tau_end);
  c.ema_decay = getd("ema_decay", c.ema_decay);
  c.validate();
  return c;
}

namespace {

// Inverted bottleneck 3D block: pointwise expand, depthwise 3x3x3 (spatially
// strided on the first block of a stage), squeeze-excitation, swish,
// pointwise project. Batch norm statistics stay frozen.
struct Bottleneck3d {
  nn::Conv3d<float> expand, dw, project, proj_skip;
  nn::FrozenBatchNorm<float> bn1, bn2, bn3;
  nn::Linear<float> se_fc1, se_fc2;
  bool strided = false, projected = false;

  Bottleneck3d() = default;
  Bottleneck3d(nn::ParamStore<float>& ps, const std::string& name, int64_t cin, int64_t cout,
               int64_t cmid, int stride, core::Rng& rng)
      : strided(stride > 1), projected(cin != cout || stride > 1) {
    expand = nn::Conv3d<float>(ps, name + ".expand", cin, cmid, {1, 1, 1}, {1, 1, 1}, {0, 0, 0},
                               rng, 1, false);
    dw = nn::Conv3d<float>(ps, name + ".dw", cmid, cmid, {3, 3, 3}, {1, stride, stride},
                           {1, 1, 1}, rng, cmid, false);
    project = nn::Conv3d<float>(ps, name + ".project", cmid, cout, {1, 1, 1}, {1, 1, 1},
                                {0, 0, 0}, rng, 1, false);
    if (projected)
      proj_skip = nn::Conv3d<float>(ps, name + ".skip", cin, cout, {1, 1, 1},
                                    {1, stride, stride}, {0, 0, 0}, rng, 1, false);
    bn1 = nn::FrozenBatchNorm<float>(ps, name + ".bn1", cmid);
    bn2 = nn::FrozenBatchNorm<float>(ps, name + ".bn2", cmid);
    bn3 = nn::FrozenBatchNorm<float>(ps, name + ".bn3", cout);
    const int64_t se_hidden = std::max<int64_t>(4, cmid / 16);
    se_fc1 = nn::Linear<float>(ps, name + ".se1", cmid, se_hidden, rng);
    se_fc2 = nn::Linear<float>(ps, name + ".se2", se_hidden, cmid, rng);
  }

  Var<float> forward(const Var<float>& x) const {
    auto h = nn::swish(bn1.forward(expand.forward(x)));
    h = bn2.forward(dw.forward(h));
    // squeeze-excitation over the expanded features
    auto pooled = ops::mean_spatial(h);  // [N, Cmid]
    auto gate = ops::sigmoid(se_fc2.forward(ops::leaky_relu(se_fc1.forward(pooled), 0.1f)));
    h = nn::swish(ops::mul_channels(h, gate));
    h = bn3.forward(project.forward(h));
    auto skip = projected ? proj_skip.forward(x) : x;
    return ops::add(h, skip);
  }
};

// Conditional 3D residual block: depthwise 3x3x3 (group size = channels),
// CGN on the bandwidth embedding, lrelu, 1x1x1, GN, residual, lrelu.
struct CondBlock3d {
  nn::Conv3d<float> dw, pw;
  nn::CondGroupNormVec<float> cgn;
  nn::GroupNorm<float> gn;

  CondBlock3d() = default;
  CondBlock3d(nn::ParamStore<float>& ps, const std::string& name, int64_t c, int64_t cond_dim,
              int64_t groups, core::Rng& rng) {
    dw = nn::Conv3d<float>(ps, name + ".dw", c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, rng, c);
    pw = nn::Conv3d<float>(ps, name + ".pw", c, c, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, rng);
    cgn = nn::CondGroupNormVec<float>(ps, name + ".cgn", c, cond_dim, groups, rng);
    gn = nn::GroupNorm<float>(ps, name + ".gn", c, groups);
  }

  Var<float> forward(const Var<float>& x, const Var<float>& z) const {
    auto h = ops::leaky_relu(cgn.forward(dw.forward(x), z), 0.1f);
    h = gn.forward(pw.forward(h));
    return ops::leaky_relu(ops::add(h, x), 0.1f);
  }
};

}  // namespace

struct ControlNet::Impl {
  nn::Conv3d<float> stem_s, stem_t;
  nn::FrozenBatchNorm<float> stem_bn;
  std::vector<Bottleneck3d> blocks;
  nn::Linear<float> bw_fc1, bw_fc2;
  CondBlock3d head1, head2;
  nn::Conv3d<float> logits;
};

ControlNet::ControlNet(const ControlConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  core::Rng rng(seed);
  impl_ = std::make_shared<Impl>();
  // stem: spatial 3x3 stride 2, then temporal depthwise 5x1x1
  impl_->stem_s = nn::Conv3d<float>(ps_, "backbone.stem_s", 3, cfg.stem_channels, {1, 3, 3},
                                    {1, 2, 2}, {0, 1, 1}, rng, 1, false);
  impl_->stem_t =
      nn::Conv3d<float>(ps_, "backbone.stem_t", cfg.stem_channels, cfg.stem_channels, {5, 1, 1},
                        {1, 1, 1}, {2, 0, 0}, rng, cfg.stem_channels, false);
  impl_->stem_bn = nn::FrozenBatchNorm<float>(ps_, "backbone.stem_bn", cfg.stem_channels);

  int64_t cin = cfg.stem_channels;
  for (int s = 0; s < 4; ++s) {
    const int64_t cout = cfg.stage_channels[s];
    const int64_t cmid = static_cast<int64_t>(std::lround(cout * cfg.expansion));
    for (int b = 0; b < cfg.stage_depths[s]; ++b) {
      // the last stage keeps spatial stride 1 so logits stay at H/16
      const int stride = (b == 0 && s < 3) ? 2 : 1;
      impl_->blocks.emplace_back(ps_, "backbone.s" + std::to_string(s) + "b" + std::to_string(b),
                                 cin, cout, cmid, stride, rng);
      cin = cout;
    }
  }
  impl_->bw_fc1 = nn::Linear<float>(ps_, "head.bw_fc1", 1, cfg.cond_dim, rng);
  impl_->bw_fc2 = nn::Linear<float>(ps_, "head.bw_fc2", cfg.cond_dim, cfg.cond_dim, rng);
  impl_->head1 = CondBlock3d(ps_, "head.block1", cin, cfg.cond_dim, cfg.gn_groups, rng);
  impl_->head2 = CondBlock3d(ps_, "head.block2", cin, cfg.cond_dim, cfg.gn_groups, rng);
  impl_->logits = nn::Conv3d<float>(ps_, "head.logits", cin, codec::kQpLevels, {1, 1, 1},
                                    {1, 1, 1}, {0, 0, 0}, rng);

  if (ps_.num_trainable() > cfg.param_budget)
    throw ContractError("ControlNet: parameter budget exceeded: " +
                        std::to_string(ps_.num_trainable()) + " > " +
                        std::to_string(cfg.param_budget));
}

Var<float> ControlNet::forward(const Var<float>& clip, double bandwidth_bps) const {
  if (bandwidth_bps <= 0) throw ContractError("control forward: bandwidth must be positive");
  if (clip->value.ndim() != 4 || clip->value.dim(1) != 3)
    throw ContractError("control forward: clip must be [T, 3, H, W]");
  const int64_t t = clip->value.dim(0), h = clip->value.dim(2), w = clip->value.dim(3);

  // [T,3,H,W] -> [1,3,T,H,W]
  auto x = ops::reshape(ops::permute(clip, {1, 0, 2, 3}), {1, 3, t, h, w});
  x = impl_->stem_bn.forward(impl_->stem_t.forward(impl_->stem_s.forward(x)));
  x = nn::swish(x);
  for (const auto& block : impl_->blocks) x = block.forward(x);

  // standardized log10 bandwidth -> embedding vector
  const double mid = 0.5 * (std::log10(cfg_.bw_lo) + std::log10(cfg_.bw_hi));
  const double half = 0.5 * (std::log10(cfg_.bw_hi) - std::log10(cfg_.bw_lo));
  const float u = static_cast<float>((std::log10(bandwidth_bps) - mid) / half);
  auto z = core::constant(Tensor<float>::full({1, 1}, u));
  auto emb = impl_->bw_fc2.forward(ops::leaky_relu(impl_->bw_fc1.forward(z), 0.1f));

  x = impl_->head1.forward(x, emb);
  x = impl_->head2.forward(x, emb);
  x = impl_->logits.forward(x);  // [1, 52, T, h16, w16]
  return ops::reshape(x, {codec::kQpLevels, t, x->value.dim(3), x->value.dim(4)});
}

codec::QpMap ControlNet::infer_qp(const Tensor<float>& clip_frames, double bandwidth_bps) const {
  core::NoGradGuard ng;
  auto logits = forward(core::constant(clip_frames), bandwidth_bps);
  const int64_t thw = logits->value.numel() / codec::kQpLevels;
  codec::QpMap map;
  map.values =
      core::Tensor<int>({logits->value.dim(1), logits->value.dim(2), logits->value.dim(3)});
  for (int64_t i = 0; i < thw; ++i) {
    int best = 0;
    float bv = logits->value[i];
    for (int q = 1; q < codec::kQpLevels; ++q) {
      const float v = logits->value[q * thw + i];
      if (v > bv) {
        bv = v;
        best = q;
      }
    }
    map.values[i] = best;
  }
  map.validate();
  return map;
}

std::vector<Var<float>> ControlNet::backbone_parameters() const {
  std::vector<Var<float>> out;
  for (const auto& [name, v] : ps_.entries())
    if (v->requires_grad && name.rfind("backbone.", 0) == 0) out.push_back(v);
  return out;
}

std::vector<Var<float>> ControlNet::head_parameters() const {
  std::vector<Var<float>> out;
  for (const auto& [name, v] : ps_.entries())
    if (v->requires_grad && name.rfind("backbone.", 0) != 0) out.push_back(v);
  return out;
}

double tau_at(const ControlConfig& cfg, int64_t step, int64_t total_steps) {
  const double t =
      total_steps <= 1 ? 1.0 : std::min(1.0, static_cast<double>(step) / (total_steps - 1));
  return cfg.tau_end + (cfg.tau_start - cfg.tau_end) * 0.5 * (1.0 + std::cos(M_PI * t));
}

Var<float> gumbel_softmax(const Var<float>& logits, double tau, bool hard, core::Rng& rng) {
  if (tau <= 0) throw ContractError("gumbel_softmax: tau must be positive");
  Tensor<float> noise(logits->value.shape());
  for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<float>(rng.gumbel());
  auto noisy = ops::add(logits, core::constant(noise));
  auto relaxed = ops::softmax(ops::mul_scalar(noisy, static_cast<float>(1.0 / tau)), 0);
  if (!hard) return relaxed;

  // one-hot forward, relaxed gradient (straight-through)
  const int64_t thw = relaxed->value.numel() / codec::kQpLevels;
  Tensor<float> onehot = Tensor<float>::zeros(relaxed->value.shape());
  for (int64_t i = 0; i < thw; ++i) {
    int best = 0;
    float bv = relaxed->value[i];
    for (int q = 1; q < codec::kQpLevels; ++q) {
      const float v = relaxed->value[q * thw + i];
      if (v > bv) {
        bv = v;
        best = q;
      }
    }
    onehot[best * thw + i] = 1.0f;
  }
  return core::make_op<float>(std::move(onehot), {relaxed},
                              [relaxed](core::Node<float>& self) {
                                relaxed->accumulate(self.grad);
                              });
}

void save_control(const std::string& path, ControlNet& net, const std::string& kind) {
  nn::CheckpointMeta meta;
  meta.kind = kind;
  meta.config = net.config().to_map();
  nn::save_checkpoint(path, meta, net.params());
}

std::unique_ptr<ControlNet> load_control(const std::string& path) {
  nn::CheckpointMeta meta = nn::read_checkpoint_meta(path);
  if (meta.kind.rfind("control", 0) != 0)
    throw ContractError("checkpoint is not a control network: " + path);
  auto net = std::make_unique<ControlNet>(ControlConfig::from_map(meta.config), 0);
  nn::load_checkpoint(path, net->params());
  return net;
}

}  // namespace vidctl::control
