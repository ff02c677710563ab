#pragma once

#include <string>
#include <vector>

#include "vidctl/core/rng.hpp"
#include "vidctl/core/tensor.hpp"

namespace vidctl::clips {

inline constexpr int kClipLength = 8;  // matches the GOP size

// An 8-frame working clip: frames [T, 3, H, W] in [0, 1], H and W multiples
// of 16 (the macroblock size).
struct VideoClip {
  core::Tensor<float> frames;
  double fps = 0.0;
  int temporal_stride = 1;
  std::string source_id;

  int64_t length() const { return frames.defined() ? frames.dim(0) : 0; }
  int64_t height() const { return frames.dim(2); }
  int64_t width() const { return frames.dim(3); }

  // Throws ContractError when any invariant is violated.
  void validate() const;
};

// A decoded source video: frames [N, 3, H, W] plus metadata, prior to clip
// sampling. N is arbitrary.
struct FrameSequence {
  core::Tensor<float> frames;
  double fps = 0.0;
  std::string source_id;

  int64_t count() const { return frames.defined() ? frames.dim(0) : 0; }
};

enum class StridePolicy { Fixed, Random };
enum class CropPolicy { Center, Random };

struct SamplerConfig {
  int clip_length = kClipLength;
  StridePolicy stride_policy = StridePolicy::Fixed;
  int fixed_stride = 3;             // control training/eval default
  int downsample_factor = 4;        // pre-crop downsampling
  int64_t crop_h = 224, crop_w = 224;
  CropPolicy crop = CropPolicy::Center;
};

// Non-overlapping clip extraction at the configured stride. The window span
// is (clip_length-1)*stride+1 source frames; windows never overlap.
std::vector<VideoClip> sample_clips(const FrameSequence& video, const SamplerConfig& config,
                                    core::Rng* rng = nullptr);

// Downsample by an integer factor (box average) then crop to the target,
// centered or uniform-random. frames: [T, 3, H, W].
core::Tensor<float> preprocess_frames(const core::Tensor<float>& frames, int factor,
                                      int64_t crop_h, int64_t crop_w, CropPolicy crop,
                                      core::Rng* rng = nullptr);

struct AugmentConfig {
  double p_grayscale = 0.1;
  double p_reverse = 0.5;
  double p_repeat = 0.1;
};

// Surrogate pre-training augmentations: grayscale (BT.601 luma replicated to
// all channels), frame order reversal, and single-frame repetition.
VideoClip augment_for_surrogate(const VideoClip& clip, const AugmentConfig& config,
                                core::Rng& rng);

}  // namespace vidctl::clips
