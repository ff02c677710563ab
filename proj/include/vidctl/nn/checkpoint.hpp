#pragma once

#include <map>
#include <string>

#include "vidctl/nn/nn.hpp"

namespace vidctl::nn {

// Self-describing checkpoint archive: a JSON header (format version, free-form
// config/meta section, tensor directory) followed by raw float32 blobs.
// The version field is mandatory; loading rejects archives without one.
struct CheckpointMeta {
  int version = 1;
  std::string kind;                                // e.g. "surrogate", "control"
  std::map<std::string, std::string> config;       // flat key/value snapshot
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore<float>& params);

CheckpointMeta read_checkpoint_meta(const std::string& path);

// Loads tensors into an existing store; the tree (names + shapes) must match.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& params);

// Raw access for adapters that construct their module from the meta first.
std::map<std::string, core::Tensor<float>> load_checkpoint_tensors(const std::string& path,
                                                                   CheckpointMeta* meta);

}  // namespace vidctl::nn
