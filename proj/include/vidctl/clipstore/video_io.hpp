#pragma once

#include <string>

#include "vidctl/clipstore/clip.hpp"

namespace vidctl::clips {

// Loads a video into memory as float RGB frames. `path` may be a container
// file (anything the demuxer understands) or a directory of numbered
// PNG/JPEG frames. For image directories the frame rate comes from fps_hint
// (and must be > 0); for containers the stream rate wins unless fps_hint is
// set.
FrameSequence load_video(const std::string& path, double fps_hint = 0.0);

// Writes one RGB frame [3, H, W] in [0, 1] as a PNG file.
void write_png(const std::string& path, const core::Tensor<float>& rgb);

// Deterministic procedural test video: drifting textured background plus a
// few moving patches, enough structure for the encoder to bite into.
FrameSequence synthesize_sequence(int64_t frames, int64_t height, int64_t width, uint64_t seed);

}  // namespace vidctl::clips
