#pragma once

#include <memory>
#include <string>

#include "vidctl/nn/nn.hpp"

namespace vidctl::vision {

enum class Task { Segmentation, Flow };

// A frozen server-side vision model. predict() is differentiable w.r.t. the
// input pixels; the parameters never receive gradients once frozen.
// Layouts: clips [T, 3, H, W]; segmentation logits [T, C, H, W]; flow
// [T-1, 2, H, W] in pixels (x displacement first).
class DownstreamModel {
 public:
  virtual ~DownstreamModel() = default;
  virtual Task task() const = 0;
  virtual core::Var<float> predict(const core::Var<float>& clip) const = 0;
  virtual nn::ParamStore<float>& params() = 0;
  virtual const nn::ParamStore<float>& params() const = 0;
  virtual int num_classes() const { return 0; }

  // Marks every parameter non-trainable; predictions stay differentiable
  // w.r.t. the input.
  void freeze();
  bool frozen() const { return frozen_; }

  // FNV-1a over all parameter bytes; invariant across training runs.
  uint64_t param_checksum() const;

 private:
  bool frozen_ = false;
};

// Tiny stand-in models shipped as fixtures so desk-scale runs need no
// external checkpoints. Both are trained briefly on synthetic data by the
// fixture generator before use.
std::unique_ptr<DownstreamModel> make_seg_standin(int classes, uint64_t seed);
std::unique_ptr<DownstreamModel> make_flow_standin(uint64_t seed);

// Loads a model through the adapter descriptor, e.g. "standin-seg:8" or
// "standin-flow". The checkpoint must carry a matching kind tag.
std::unique_ptr<DownstreamModel> load_downstream(const std::string& checkpoint_path,
                                                 const std::string& adapter);
void save_downstream(const std::string& checkpoint_path, DownstreamModel& model,
                     const std::string& adapter);

struct MetricOptions {
  double flow_epe_threshold = 3.0;   // pixels
  double flow_rel_threshold = 0.05;  // fraction of label magnitude
  bool outlier_disjunction = true;   // true: EPE > 3 OR rel > 5% (paper wording)
};

// Segmentation: percent of pixels whose argmax class matches the pseudo
// label's argmax. Flow: F1-all outlier percentage.
double task_metric(const core::Tensor<float>& pred, const core::Tensor<float>& pseudo, Task task,
                   const MetricOptions& opts = {});

}  // namespace vidctl::vision
