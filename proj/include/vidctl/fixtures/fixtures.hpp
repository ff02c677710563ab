#pragma once

#include <memory>
#include <vector>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/vision/downstream.hpp"

namespace vidctl::fixtures {

// Deterministic synthetic clip set for desk-scale training and evaluation.
std::vector<clips::VideoClip> fixture_clips(int count, int64_t height, int64_t width,
                                            uint64_t seed);

// Stand-in downstream models, trained briefly on synthetic data and frozen.
// The segmentation target is the luma bucket of a lightly smoothed frame;
// the flow target is a known synthetic translation between frame pairs.
std::unique_ptr<vision::DownstreamModel> train_seg_standin(int classes, uint64_t seed,
                                                           int steps = 400);
std::unique_ptr<vision::DownstreamModel> train_flow_standin(uint64_t seed, int steps = 400);

// Writes a directory tree of PNG image-sequence "videos" consumable by the
// clip store; returns the created sequence directories.
std::vector<std::string> write_synthetic_dataset(const std::string& root, int sequences,
                                                 int frames_per_sequence, int64_t height,
                                                 int64_t width, uint64_t seed);

}  // namespace vidctl::fixtures
