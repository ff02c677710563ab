#include "vidctl/vision/downstream.hpp"

#include <cmath>

#include "vidctl/nn/checkpoint.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::vision {

namespace ops = core::ops;
using core::Tensor;
using core::Var;
using util::ContractError;

void DownstreamModel::freeze() {
  for (auto& [name, v] : params().entries()) v->requires_grad = false;
  frozen_ = true;
}

uint64_t DownstreamModel::param_checksum() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& [name, v] : params().entries()) {
    const auto* bytes = reinterpret_cast<const uint8_t*>(v->value.data());
    for (int64_t i = 0; i < v->value.numel() * static_cast<int64_t>(sizeof(float)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

// Four conv layers ending in per-pixel class logits; frames fold into the
// batch dimension.
class SegStandIn : public DownstreamModel {
 public:
  SegStandIn(int classes, uint64_t seed) : classes_(classes) {
    core::Rng rng(seed);
    c1_ = nn::Conv2d<float>(ps_, "seg.c1", 3, 24, 3, 1, 1, rng);
    c2_ = nn::Conv2d<float>(ps_, "seg.c2", 24, 24, 3, 1, 1, rng);
    c3_ = nn::Conv2d<float>(ps_, "seg.c3", 24, 24, 3, 1, 1, rng);
    head_ = nn::Conv2d<float>(ps_, "seg.head", 24, classes, 1, 1, 0, rng);
  }

  Task task() const override { return Task::Segmentation; }
  int num_classes() const override { return classes_; }
  nn::ParamStore<float>& params() override { return ps_; }
  const nn::ParamStore<float>& params() const override { return ps_; }

  Var<float> predict(const Var<float>& clip) const override {
    if (clip->value.ndim() != 4 || clip->value.dim(1) != 3)
      throw ContractError("SegStandIn: clip must be [T, 3, H, W]");
    auto h = ops::leaky_relu(c1_.forward(clip), 0.1f);
    h = ops::leaky_relu(c2_.forward(h), 0.1f);
    h = ops::leaky_relu(c3_.forward(h), 0.1f);
    return head_.forward(h);
  }

 private:
  int classes_;
  nn::ParamStore<float> ps_;
  nn::Conv2d<float> c1_, c2_, c3_, head_;
};

// Three conv layers on a half-resolution grid over concatenated frame pairs.
class FlowStandIn : public DownstreamModel {
 public:
  explicit FlowStandIn(uint64_t seed) {
    core::Rng rng(seed);
    c1_ = nn::Conv2d<float>(ps_, "flow.c1", 6, 24, 5, 2, 2, rng);
    c2_ = nn::Conv2d<float>(ps_, "flow.c2", 24, 24, 3, 1, 1, rng);
    c3_ = nn::Conv2d<float>(ps_, "flow.c3", 24, 2, 3, 1, 1, rng);
  }

  Task task() const override { return Task::Flow; }
  nn::ParamStore<float>& params() override { return ps_; }
  const nn::ParamStore<float>& params() const override { return ps_; }

  Var<float> predict(const Var<float>& clip) const override {
    if (clip->value.ndim() != 4 || clip->value.dim(1) != 3)
      throw ContractError("FlowStandIn: clip must be [T, 3, H, W]");
    const int64_t t = clip->value.dim(0);
    if (t < 2) throw ContractError("FlowStandIn: need at least two frames");
    const int64_t h = clip->value.dim(2), w = clip->value.dim(3);
    auto cur = ops::slice(clip, 0, 0, t - 1);
    auto nxt = ops::slice(clip, 0, 1, t - 1);
    auto x = ops::concat<float>({cur, nxt}, 1);  // [T-1, 6, H, W]
    auto f = ops::leaky_relu(c1_.forward(x), 0.1f);
    f = ops::leaky_relu(c2_.forward(f), 0.1f);
    f = c3_.forward(f);
    // back to full resolution; displacement scales with the upsampling
    return ops::mul_scalar(ops::resize_bilinear(f, h, w), 2.0f);
  }

 private:
  nn::ParamStore<float> ps_;
  nn::Conv2d<float> c1_, c2_, c3_;
};

}  // namespace

std::unique_ptr<DownstreamModel> make_seg_standin(int classes, uint64_t seed) {
  return std::make_unique<SegStandIn>(classes, seed);
}

std::unique_ptr<DownstreamModel> make_flow_standin(uint64_t seed) {
  return std::make_unique<FlowStandIn>(seed);
}

void save_downstream(const std::string& path, DownstreamModel& model,
                     const std::string& adapter) {
  nn::CheckpointMeta meta;
  meta.kind = "downstream";
  meta.config["adapter"] = adapter;
  nn::save_checkpoint(path, meta, model.params());
}

std::unique_ptr<DownstreamModel> load_downstream(const std::string& path,
                                                 const std::string& adapter) {
  std::unique_ptr<DownstreamModel> model;
  if (adapter.rfind("standin-seg", 0) == 0) {
    int classes = 8;
    const auto colon = adapter.find(':');
    if (colon != std::string::npos) classes = std::stoi(adapter.substr(colon + 1));
    model = make_seg_standin(classes, 0);
  } else if (adapter == "standin-flow") {
    model = make_flow_standin(0);
  } else {
    throw ContractError("unknown downstream adapter: " + adapter);
  }
  const nn::CheckpointMeta meta = nn::load_checkpoint(path, model->params());
  if (meta.kind != "downstream")
    throw ContractError("checkpoint is not a downstream model: " + path);
  model->freeze();
  return model;
}

double task_metric(const Tensor<float>& pred, const Tensor<float>& pseudo, Task task,
                   const MetricOptions& opts) {
  core::check_same_shape(pred, pseudo, "task_metric");
  if (task == Task::Segmentation) {
    // [T, C, H, W]: fraction of matching argmax classes
    const int64_t t = pred.dim(0), c = pred.dim(1), hw = pred.dim(2) * pred.dim(3);
    int64_t match = 0;
    for (int64_t ti = 0; ti < t; ++ti)
      for (int64_t p = 0; p < hw; ++p) {
        int64_t best_a = 0, best_b = 0;
        float va = pred[(ti * c) * hw + p], vb = pseudo[(ti * c) * hw + p];
        for (int64_t ci = 1; ci < c; ++ci) {
          const float a = pred[(ti * c + ci) * hw + p];
          const float b = pseudo[(ti * c + ci) * hw + p];
          if (a > va) {
            va = a;
            best_a = ci;
          }
          if (b > vb) {
            vb = b;
            best_b = ci;
          }
        }
        if (best_a == best_b) ++match;
      }
    return 100.0 * static_cast<double>(match) / static_cast<double>(t * hw);
  }
  // flow F1-all: outlier percentage over pixels
  const int64_t t = pred.dim(0), hw = pred.dim(2) * pred.dim(3);
  if (pred.dim(1) != 2) throw ContractError("task_metric: flow prediction must be [T-1,2,H,W]");
  int64_t outliers = 0;
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t p = 0; p < hw; ++p) {
      const double dx = pred[(ti * 2 + 0) * hw + p] - pseudo[(ti * 2 + 0) * hw + p];
      const double dy = pred[(ti * 2 + 1) * hw + p] - pseudo[(ti * 2 + 1) * hw + p];
      const double epe = std::sqrt(dx * dx + dy * dy);
      const double lx = pseudo[(ti * 2 + 0) * hw + p];
      const double ly = pseudo[(ti * 2 + 1) * hw + p];
      const double mag = std::sqrt(lx * lx + ly * ly);
      const bool over_abs = epe > opts.flow_epe_threshold;
      const bool over_rel = epe > opts.flow_rel_threshold * mag;
      const bool outlier = opts.outlier_disjunction ? (over_abs || over_rel)
                                                    : (over_abs && over_rel);
      if (outlier) ++outliers;
    }
  return 100.0 * static_cast<double>(outliers) / static_cast<double>(t * hw);
}

}  // namespace vidctl::vision
