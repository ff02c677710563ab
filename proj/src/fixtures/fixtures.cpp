#include "vidctl/fixtures/fixtures.hpp"

#include <cmath>
#include <filesystem>

#include "vidctl/clipstore/video_io.hpp"
#include "vidctl/nn/optim.hpp"

namespace vidctl::fixtures {

namespace ops = core::ops;
using core::Tensor;
using core::Var;

std::vector<clips::VideoClip> fixture_clips(int count, int64_t height, int64_t width,
                                            uint64_t seed) {
  std::vector<clips::VideoClip> out;
  core::Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    auto seq = clips::synthesize_sequence(clips::kClipLength, height, width, rng.next_u64());
    clips::VideoClip clip;
    clip.frames = seq.frames;
    clip.fps = 17.0;
    clip.temporal_stride = 3;
    clip.source_id = "fixture-" + std::to_string(i);
    clip.validate();
    out.push_back(std::move(clip));
  }
  return out;
}

namespace {

// Per-pixel luma bucket of a box-smoothed frame; the classification target
// for the segmentation stand-in.
Tensor<float> luma_bucket_onehot(const Tensor<float>& frames, int classes) {
  const int64_t t = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  Tensor<float> onehot = Tensor<float>::zeros({t, classes, h, w});
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        double acc = 0;
        int n = 0;
        for (int64_t di = -1; di <= 1; ++di)
          for (int64_t dj = -1; dj <= 1; ++dj) {
            const int64_t y = i + di, x = j + dj;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            acc += 0.299 * frames.at(ti, int64_t(0), y, x) +
                   0.587 * frames.at(ti, int64_t(1), y, x) +
                   0.114 * frames.at(ti, int64_t(2), y, x);
            ++n;
          }
        const double luma = acc / n;
        int cls = static_cast<int>(luma * classes);
        cls = std::clamp(cls, 0, classes - 1);
        onehot.at(ti, int64_t(cls), i, j) = 1.0f;
      }
  return onehot;
}

std::vector<Var<float>> trainables(nn::ParamStore<float>& ps) {
  std::vector<Var<float>> out;
  for (auto& [name, v] : ps.entries())
    if (v->requires_grad) out.push_back(v);
  return out;
}

}  // namespace

std::unique_ptr<vision::DownstreamModel> train_seg_standin(int classes, uint64_t seed,
                                                           int steps) {
  auto model = vision::make_seg_standin(classes, seed);
  core::Rng rng(seed ^ 0xfeed);
  nn::AdamW<float> opt({{trainables(model->params()), 1.0, 1e-5}}, 2e-3);
  for (int step = 0; step < steps; ++step) {
    auto seq = clips::synthesize_sequence(2, 32, 32, rng.next_u64());
    auto target = luma_bucket_onehot(seq.frames, classes);
    auto logits = model->predict(core::constant(seq.frames));
    // cross entropy against the bucket labels
    auto logq = ops::log(ops::add_scalar(ops::softmax(logits, 1), 1e-12f));
    auto ce = ops::neg(ops::sum_all(ops::mul(logq, core::constant(target))));
    auto loss = ops::mul_scalar(
        ce, 1.0f / static_cast<float>(target.numel() / classes));
    model->params().zero_grad();
    core::backward(loss);
    opt.step();
  }
  model->freeze();
  return model;
}

std::unique_ptr<vision::DownstreamModel> train_flow_standin(uint64_t seed, int steps) {
  auto model = vision::make_flow_standin(seed);
  core::Rng rng(seed ^ 0xf10e);
  nn::AdamW<float> opt({{trainables(model->params()), 1.0, 1e-5}}, 2e-3);
  for (int step = 0; step < steps; ++step) {
    // two-frame clip: the second frame is the first translated by (dx, dy)
    auto seq = clips::synthesize_sequence(1, 32, 32, rng.next_u64());
    const float dx = static_cast<float>(rng.uniform(-3.0, 3.0));
    const float dy = static_cast<float>(rng.uniform(-3.0, 3.0));
    Tensor<float> flow({1, 2, 32, 32});
    for (int64_t p = 0; p < 32 * 32; ++p) {
      flow[p] = dx;
      flow[32 * 32 + p] = dy;
    }
    Tensor<float> warped;
    {
      core::NoGradGuard ng;
      warped = ops::warp_bilinear<float>(core::constant(seq.frames), core::constant(flow))
                   ->value;
    }
    Tensor<float> pair({2, 3, 32, 32});
    std::memcpy(pair.data(), warped.data(), sizeof(float) * warped.numel());
    std::memcpy(pair.data() + warped.numel(), seq.frames.data(),
                sizeof(float) * warped.numel());
    // frame1 sampled at p + flow reproduces frame0, so flow(frame0 -> frame1)
    // is exactly `flow`
    auto pred = model->predict(core::constant(pair));
    auto loss = ops::mean_all(ops::abs(ops::sub(pred, core::constant(flow))));
    model->params().zero_grad();
    core::backward(loss);
    opt.step();
  }
  model->freeze();
  return model;
}

std::vector<std::string> write_synthetic_dataset(const std::string& root, int sequences,
                                                 int frames_per_sequence, int64_t height,
                                                 int64_t width, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  core::Rng rng(seed);
  std::vector<std::string> dirs;
  for (int s = 0; s < sequences; ++s) {
    char name[64];
    std::snprintf(name, sizeof name, "seq%03d", s);
    const fs::path dir = fs::path(root) / name;
    fs::create_directories(dir);
    auto seq = clips::synthesize_sequence(frames_per_sequence, height, width, rng.next_u64());
    for (int f = 0; f < frames_per_sequence; ++f) {
      Tensor<float> frame({3, height, width});
      std::memcpy(frame.data(), seq.frames.data() + f * frame.numel(),
                  sizeof(float) * frame.numel());
      char fname[64];
      std::snprintf(fname, sizeof fname, "frame%05d.png", f);
      clips::write_png((dir / fname).string(), frame);
    }
    dirs.push_back(dir.string());
  }
  return dirs;
}

}  // namespace vidctl::fixtures
