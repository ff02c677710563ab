#pragma once

#include <string>
#include <vector>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/codec/bridge.hpp"
#include "vidctl/util/config.hpp"
#include "vidctl/vision/downstream.hpp"

namespace vidctl::cli {

// Exit codes: 0 success, 2 configuration/validation error, 1 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  int64_t seed_override = -1;
};

int cmd_pretrain_surrogate(const CommonArgs& args);
int cmd_train_control(const CommonArgs& args);
int cmd_evaluate(const CommonArgs& args);
int cmd_sweep_qp(const CommonArgs& args);
int cmd_encode(const CommonArgs& args);

// Shared building blocks (exposed for the acceptance suite).
std::string resolve_out_dir(const util::Config& cfg, const CommonArgs& args);
uint64_t resolve_seed(const util::Config& cfg, const CommonArgs& args);

// Loads the dataset named by dataset.* keys. "synthetic:<n>@<w>x<h>" renders
// PNG sequences under <out>/synthetic-data (cached) and ingests them through
// the regular clip store path.
std::vector<clips::VideoClip> load_dataset(const util::Config& cfg, const std::string& out_dir,
                                           uint64_t seed, util::Validator& v);

codec::BridgeConfig bridge_config(const util::Config& cfg, util::Validator& v,
                                  const char* argv0 = nullptr);

std::unique_ptr<vision::DownstreamModel> load_downstream_model(const util::Config& cfg,
                                                               const std::string& out_dir,
                                                               uint64_t seed,
                                                               util::Validator& v);

// Locates the bundled encoder shim: VIDCTL_SHIM env, then next to the
// running binary. Returns an empty string when unavailable.
std::string find_shim_binary(const char* argv0);

}  // namespace vidctl::cli
