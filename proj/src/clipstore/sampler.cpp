#include <algorithm>
#include <cstring>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::clips {

using util::ContractError;
using util::GeometryError;
using util::InsufficientFramesError;

void VideoClip::validate() const {
  if (!frames.defined() || frames.ndim() != 4 || frames.dim(1) != 3)
    throw ContractError("VideoClip: frames must be [T, 3, H, W]");
  if (frames.dim(0) != kClipLength)
    throw ContractError("VideoClip: T must be " + std::to_string(kClipLength));
  if (frames.dim(2) % 16 != 0 || frames.dim(3) % 16 != 0)
    throw ContractError("VideoClip: H and W must be divisible by 16");
  if (fps <= 0) throw ContractError("VideoClip: fps must be positive");
  if (temporal_stride < 1 || temporal_stride > 3)
    throw ContractError("VideoClip: temporal_stride must be in {1,2,3}");
  const float* p = frames.data();
  for (int64_t i = 0; i < frames.numel(); ++i)
    if (!(p[i] >= 0.0f && p[i] <= 1.0f))
      throw ContractError("VideoClip: pixel value outside [0,1]");
}

std::vector<VideoClip> sample_clips(const FrameSequence& video, const SamplerConfig& config,
                                    core::Rng* rng) {
  if (video.count() == 0) throw util::EmptyInputError("sample_clips: no frames");
  std::vector<VideoClip> clips;
  const int64_t n = video.count();
  const int64_t c = video.frames.dim(1), h = video.frames.dim(2), w = video.frames.dim(3);
  const int64_t frame_elems = c * h * w;

  int64_t start = 0;
  bool made_any = false;
  while (true) {
    int stride = config.fixed_stride;
    if (config.stride_policy == StridePolicy::Random) {
      if (!rng) throw ContractError("sample_clips: random stride policy needs an rng");
      stride = static_cast<int>(rng->uniform_int(1, 3));
    }
    const int64_t span = static_cast<int64_t>(config.clip_length - 1) * stride + 1;
    if (start + span > n) break;
    VideoClip clip;
    clip.frames = core::Tensor<float>({config.clip_length, c, h, w});
    for (int t = 0; t < config.clip_length; ++t)
      std::memcpy(clip.frames.data() + t * frame_elems,
                  video.frames.data() + (start + t * stride) * frame_elems,
                  sizeof(float) * static_cast<size_t>(frame_elems));
    clip.fps = video.fps;
    clip.temporal_stride = stride;
    clip.source_id = video.source_id + "@" + std::to_string(start);
    clips.push_back(std::move(clip));
    made_any = true;
    start += span;
  }
  if (!made_any)
    throw InsufficientFramesError("sample_clips: video has " + std::to_string(n) +
                                  " frames, need at least " +
                                  std::to_string((config.clip_length - 1) * config.fixed_stride +
                                                 1));
  return clips;
}

core::Tensor<float> preprocess_frames(const core::Tensor<float>& frames, int factor,
                                      int64_t crop_h, int64_t crop_w, CropPolicy crop,
                                      core::Rng* rng) {
  if (frames.ndim() != 4) throw ContractError("preprocess_frames: expected [T, C, H, W]");
  if (factor < 1) throw ContractError("preprocess_frames: factor must be >= 1");
  const int64_t t = frames.dim(0), c = frames.dim(1), h = frames.dim(2), w = frames.dim(3);
  const int64_t dh = h / factor, dw = w / factor;
  if (dh < crop_h || dw < crop_w)
    throw GeometryError("preprocess_frames: downsampled size " + std::to_string(dw) + "x" +
                        std::to_string(dh) + " smaller than crop " + std::to_string(crop_w) +
                        "x" + std::to_string(crop_h));

  // box-average downsample
  core::Tensor<float> down({t, c, dh, dw});
  const float inv = 1.0f / static_cast<float>(factor * factor);
  for (int64_t tc = 0; tc < t * c; ++tc) {
    const float* src = frames.data() + tc * h * w;
    float* dst = down.data() + tc * dh * dw;
    for (int64_t i = 0; i < dh; ++i)
      for (int64_t j = 0; j < dw; ++j) {
        float acc = 0;
        for (int di = 0; di < factor; ++di)
          for (int dj = 0; dj < factor; ++dj)
            acc += src[(i * factor + di) * w + j * factor + dj];
        dst[i * dw + j] = acc * inv;
      }
  }
  if (dh == crop_h && dw == crop_w) return down;

  int64_t oy, ox;
  if (crop == CropPolicy::Center) {
    oy = (dh - crop_h) / 2;
    ox = (dw - crop_w) / 2;
  } else {
    if (!rng) throw ContractError("preprocess_frames: random crop needs an rng");
    oy = rng->uniform_int(0, dh - crop_h);
    ox = rng->uniform_int(0, dw - crop_w);
  }
  core::Tensor<float> out({t, c, crop_h, crop_w});
  for (int64_t tc = 0; tc < t * c; ++tc)
    for (int64_t i = 0; i < crop_h; ++i)
      std::memcpy(out.data() + (tc * crop_h + i) * crop_w,
                  down.data() + (tc * dh + oy + i) * dw + ox,
                  sizeof(float) * static_cast<size_t>(crop_w));
  return out;
}

VideoClip augment_for_surrogate(const VideoClip& clip, const AugmentConfig& config,
                                core::Rng& rng) {
  VideoClip out = clip;
  out.frames = clip.frames.clone();
  const int64_t t = out.frames.dim(0), c = out.frames.dim(1);
  const int64_t hw = out.frames.dim(2) * out.frames.dim(3);

  if (rng.bernoulli(config.p_grayscale)) {
    for (int64_t ti = 0; ti < t; ++ti) {
      float* r = out.frames.data() + (ti * c + 0) * hw;
      float* g = out.frames.data() + (ti * c + 1) * hw;
      float* b = out.frames.data() + (ti * c + 2) * hw;
      for (int64_t p = 0; p < hw; ++p) {
        const float luma = 0.299f * r[p] + 0.587f * g[p] + 0.114f * b[p];
        r[p] = g[p] = b[p] = luma;
      }
    }
  }
  if (rng.bernoulli(config.p_reverse)) {
    core::Tensor<float> rev(out.frames.shape());
    const int64_t fsz = c * hw;
    for (int64_t ti = 0; ti < t; ++ti)
      std::memcpy(rev.data() + ti * fsz, out.frames.data() + (t - 1 - ti) * fsz,
                  sizeof(float) * static_cast<size_t>(fsz));
    out.frames = rev;
  }
  if (rng.bernoulli(config.p_repeat)) {
    // repeat a uniformly chosen frame in place of its successor
    const int64_t k = rng.uniform_int(0, t - 2);
    const int64_t fsz = c * hw;
    std::memcpy(out.frames.data() + (k + 1) * fsz, out.frames.data() + k * fsz,
                sizeof(float) * static_cast<size_t>(fsz));
  }
  return out;
}

}  // namespace vidctl::clips
