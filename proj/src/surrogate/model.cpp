#include "vidctl/surrogate/model.hpp"

#include <sstream>

namespace vidctl::surrogate {

namespace ops = core::ops;
using core::Var;
using util::ContractError;

SurrogateConfig SurrogateConfig::paper_scale() { return SurrogateConfig{}; }

SurrogateConfig SurrogateConfig::desk_scale() {
  SurrogateConfig c;
  c.enc_channels = {12, 16, 24, 32};
  c.dec_channels = {32, 24, 16, 12};
  c.cond_dim = 16;
  c.agru_iterations = 2;
  c.token_dim = 16;
  c.attn_heads = 2;
  c.gn_groups = 4;
  c.flow_width = 12;
  return c;
}

SurrogateConfig SurrogateConfig::tiny() {
  SurrogateConfig c;
  c.enc_channels = {4, 4, 6, 8};
  c.dec_channels = {8, 6, 4, 4};
  c.cond_dim = 6;
  c.agru_iterations = 2;
  c.token_dim = 8;
  c.attn_heads = 2;
  c.gn_groups = 2;
  c.flow_width = 4;
  return c;
}

void SurrogateConfig::validate() const {
  for (int64_t c : enc_channels)
    if (c <= 0 || c % gn_groups != 0)
      throw ContractError("SurrogateConfig: encoder channels must be positive multiples of "
                          "gn_groups");
  for (int64_t c : dec_channels)
    if (c <= 0 || c % gn_groups != 0)
      throw ContractError("SurrogateConfig: decoder channels must be positive multiples of "
                          "gn_groups");
  if (cond_dim <= 0 || token_dim <= 0 || flow_width <= 0)
    throw ContractError("SurrogateConfig: dims must be positive");
  if (agru_iterations < 1) throw ContractError("SurrogateConfig: iterations must be >= 1");
  if (token_dim % attn_heads != 0)
    throw ContractError("SurrogateConfig: token_dim % attn_heads != 0");
  if (a_rho_v < 0 || a_ssim < 0 || a_ff < 0 || a_rho_f < 0 || a_l1 < 0)
    throw ContractError("SurrogateConfig: loss weights must be nonnegative");
}

std::map<std::string, std::string> SurrogateConfig::to_map() const {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, auto v) {
    std::ostringstream ss;
    ss << v;
    m[k] = ss.str();
  };
  for (int i = 0; i < 4; ++i) put("enc" + std::to_string(i), enc_channels[i]);
  for (int i = 0; i < 4; ++i) put("dec" + std::to_string(i), dec_channels[i]);
  put("cond_dim", cond_dim);
  put("agru_iterations", agru_iterations);
  put("token_dim", token_dim);
  put("attn_heads", attn_heads);
  put("gn_groups", gn_groups);
  put("flow_width", flow_width);
  put("finetune_flow", finetune_flow ? 1 : 0);
  put("a_rho_v", a_rho_v);
  put("a_ssim", a_ssim);
  put("a_ff", a_ff);
  put("a_rho_f", a_rho_f);
  put("a_l1", a_l1);
  return m;
}

SurrogateConfig SurrogateConfig::from_map(const std::map<std::string, std::string>& m) {
  SurrogateConfig c;
  auto geti = [&](const std::string& k, int64_t d) {
    auto it = m.find(k);
    return it == m.end() ? d : std::stoll(it->second);
  };
  auto getd = [&](const std::string& k, double d) {
    auto it = m.find(k);
    return it == m.end() ? d : std::stod(it->second);
  };
  for (int i = 0; i < 4; ++i) c.enc_channels[i] = geti("enc" + std::to_string(i), c.enc_channels[i]);
  for (int i = 0; i < 4; ++i) c.dec_channels[i] = geti("dec" + std::to_string(i), c.dec_channels[i]);
  c.cond_dim = geti("cond_dim", c.cond_dim);
  c.agru_iterations = static_cast<int>(geti("agru_iterations", c.agru_iterations));
  c.token_dim = geti("token_dim", c.token_dim);
  c.attn_heads = static_cast<int>(geti("attn_heads", c.attn_heads));
  c.gn_groups = geti("gn_groups", c.gn_groups);
  c.flow_width = geti("flow_width", c.flow_width);
  c.finetune_flow = geti("finetune_flow", 1) != 0;
  c.a_rho_v = getd("a_rho_v", c.a_rho_v);
  c.a_ssim = getd("a_ssim", c.a_ssim);
  c.a_ff = getd("a_ff", c.a_ff);
  c.a_rho_f = getd("a_rho_f", c.a_rho_f);
  c.a_l1 = getd("a_l1", c.a_l1);
  c.validate();
  return c;
}

template <typename T>
SurrogateNet<T>::SurrogateNet(const SurrogateConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  core::Rng rng(seed);
  const int64_t cz = cfg_.cond_dim;
  embed1_ = nn::Conv2d<T>(ps_, "embed.fc1", codec::kQpLevels, cz, 1, 1, 0, rng);
  embed2_ = nn::Conv2d<T>(ps_, "embed.fc2", cz, cz, 1, 1, 0, rng);

  int64_t cin = 3;
  for (int i = 0; i < 4; ++i) {
    enc_.emplace_back(ps_, "enc" + std::to_string(i), cin, cfg_.enc_channels[i], cz,
                      cfg_.gn_groups, rng);
    cin = cfg_.enc_channels[i];
  }
  const int64_t k = cfg_.enc_channels[3];
  agru_i_ = detail::AgruCell<T>(ps_, "agru.i", k, 0, cz, cfg_.gn_groups, rng);
  agru_p_ = detail::AgruCell<T>(ps_, "agru.p", k, 1, cz, cfg_.gn_groups, rng);
  agru_b_ = detail::AgruCell<T>(ps_, "agru.b", k, 2, cz, cfg_.gn_groups, rng);

  cin = k;
  for (int i = 0; i < 4; ++i) {
    // skips pair the decoder output resolution with the encoder stage of the
    // same resolution; the full-resolution stage has no skip source
    const int64_t cskip = i < 3 ? cfg_.enc_channels[2 - i] : 0;
    dec_.emplace_back(ps_, "dec" + std::to_string(i), cin, cskip, cfg_.dec_channels[i], cz,
                      cfg_.gn_groups, rng);
    cin = cfg_.dec_channels[i];
  }
  out_conv_ = nn::Conv2d<T>(ps_, "out", cfg_.dec_channels[3], 3, 3, 1, 1, rng);
  fs_head_ = detail::FileSizeHead<T>(ps_, "fs", k, cfg_.token_dim, cfg_.attn_heads, rng);
  flow_net_ = std::make_unique<TinyFlowNet<T>>(ps_, "flow", cfg_.flow_width, rng);
  if (!cfg_.finetune_flow)
    for (auto& [name, v] : ps_.entries())
      if (name.rfind("flow.", 0) == 0) v->requires_grad = false;
}

template <typename T>
Var<T> SurrogateNet<T>::embed_qp(const Var<T>& qp) const {
  if (qp->value.ndim() != 4 || qp->value.dim(0) != codec::kQpLevels)
    throw ContractError("embed_qp: expected [52, T, h, w]");
  auto x = ops::permute(qp, {1, 0, 2, 3});  // [T, 52, h, w]
  auto h = ops::leaky_relu(embed1_.forward(x), T(0.1));
  return embed2_.forward(h);
}

template <typename T>
Var<T> SurrogateNet<T>::align_features(const Var<T>& ref_features, const Var<T>& target_frame,
                                       const Var<T>& ref_frame) const {
  const int64_t fh = ref_features->value.dim(2), fw = ref_features->value.dim(3);
  const int64_t ih = target_frame->value.dim(2);
  auto full = flow_estimator()->flow(target_frame, ref_frame);
  const T scale = static_cast<T>(fh) / static_cast<T>(ih);
  auto small = ops::mul_scalar(ops::resize_bilinear(full, fh, fw), scale);
  return ops::warp_bilinear(ref_features, small);
}

template <typename T>
Var<T> SurrogateNet<T>::agru_step(char type, const Var<T>& h, const Var<T>& ref_cat,
                                  const Var<T>& z, const Var<T>* forced_update_gate) const {
  const detail::AgruCell<T>* cell = nullptr;
  switch (type) {
    case 'I':
      cell = &agru_i_;
      break;
    case 'P':
      cell = &agru_p_;
      break;
    case 'B':
      cell = &agru_b_;
      break;
    default:
      throw ContractError("agru_step: unknown frame type");
  }
  const int64_t k = cfg_.enc_channels[3];
  const int64_t got = ref_cat ? ref_cat->value.dim(1) : 0;
  if (got != cell->refs * k)
    throw ContractError("agru_step: reference channel count mismatch for type " +
                        std::string(1, type));
  return cell->step(h, ref_cat, z, forced_update_gate);
}

template <typename T>
typename SurrogateNet<T>::Output SurrogateNet<T>::forward(const Var<T>& clip, const Var<T>& qp,
                                                          const codec::GopStructure& gop) const {
  const int64_t t = clip->value.dim(0);
  if (static_cast<int64_t>(gop.picture_types.size()) != t)
    throw ContractError("surrogate forward: GOP length != clip length");
  if (qp->value.dim(1) != t || qp->value.dim(2) != clip->value.dim(2) / codec::kMacroblock ||
      qp->value.dim(3) != clip->value.dim(3) / codec::kMacroblock)
    throw ContractError("surrogate forward: QP grid does not match clip");

  auto z = embed_qp(qp);  // [T, Cz, h16, w16]

  // frame-level encoder, T as batch
  std::vector<Var<T>> stages;
  Var<T> x = clip;
  for (const auto& block : enc_) {
    x = block.forward(x, z);
    stages.push_back(x);
  }

  // per-frame state for the recurrent bottleneck
  std::vector<Var<T>> state(t), z_frames(t), frames(t);
  for (int64_t i = 0; i < t; ++i) {
    state[i] = ops::slice(x, 0, i, 1);
    z_frames[i] = ops::slice(z, 0, i, 1);
    frames[i] = ops::slice(clip, 0, i, 1);
  }

  // flows from each frame to its references, fixed across iterations
  std::vector<std::vector<Var<T>>> flows(t);
  for (int64_t i = 0; i < t; ++i)
    for (int ref : gop.reference_map[i]) {
      const int64_t fh = state[i]->value.dim(2), fw = state[i]->value.dim(3);
      auto full = flow_estimator()->flow(frames[i], frames[ref]);
      const T scale = static_cast<T>(fh) / static_cast<T>(clip->value.dim(2));
      flows[i].push_back(ops::mul_scalar(ops::resize_bilinear(full, fh, fw), scale));
    }

  for (int iter = 0; iter < cfg_.agru_iterations; ++iter) {
    // references read the previous iteration's state
    std::vector<Var<T>> snapshot = state;
    for (int64_t i = 0; i < t; ++i) {
      const auto& refs = gop.reference_map[i];
      Var<T> ref_cat;
      if (!refs.empty()) {
        std::vector<Var<T>> aligned;
        for (size_t r = 0; r < refs.size(); ++r)
          aligned.push_back(ops::warp_bilinear(snapshot[refs[r]], flows[i][r]));
        ref_cat = aligned.size() == 1 ? aligned[0] : ops::concat<T>(aligned, 1);
      }
      state[i] = agru_step(gop.picture_types[i], snapshot[i], ref_cat, z_frames[i]);
    }
  }

  Var<T> bottleneck = ops::concat<T>(state, 0);  // [T, K, h16, w16]

  // decoder with skip connections into matching resolutions
  Var<T> y = bottleneck;
  for (size_t i = 0; i < dec_.size(); ++i) {
    const Var<T> skip = i < 3 ? stages[2 - i] : Var<T>();
    y = dec_[i].forward(y, skip, z);
  }
  Var<T> frames_tilde = ops::sigmoid(out_conv_.forward(y));

  std::vector<Var<T>> sizes;
  sizes.reserve(t);
  for (int64_t i = 0; i < t; ++i)
    sizes.push_back(fs_head_.forward(state[i], gop.picture_types[i]));
  Var<T> log_sizes = ops::concat<T>(sizes, 0);  // [T]

  return Output{frames_tilde, log_sizes};
}

template class SurrogateNet<float>;
template class SurrogateNet<double>;

}  // namespace vidctl::surrogate
