#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/codec/qp_map.hpp"

namespace vidctl::codec {

// Frame-type pattern and modeled reference wiring for one GOP, display order.
struct GopStructure {
  int gop_size = 8;
  std::vector<char> picture_types;            // 'I' / 'P' / 'B'
  std::vector<std::vector<int>> reference_map;  // per frame: reference indices

  // Builds the reference map from the type pattern: P frames reference the
  // nearest previous I/P, B frames the nearest previous and next I/P.
  static GopStructure from_types(const std::vector<char>& types);
  void validate() const;
};

// Ground-truth coding result for one clip, display order throughout.
struct CodedClip {
  core::Tensor<float> frames_hat;     // [T, 3, H, W] decoded frames
  std::vector<int64_t> file_sizes;    // per-frame encoded bytes
  std::vector<char> picture_types;    // from the bitstream
  double total_bitrate = 0.0;         // bit/s via the stream-duration formula
};

struct BridgeConfig {
  // Path of the external encoder binary. Empty runs the identical encode
  // in-process (same code the bundled shim wraps); the default build installs
  // the shim and passes its path here so ground truth always comes from an
  // isolated encoder process.
  std::string encoder_path;
  int gop = 8;
  std::string preset = "medium";
  int base_qp = 26;        // anchor for the ROI realization of QP maps
  std::string temp_dir;    // scratch space; empty -> system temp
};

// Ground-truth H.264 encode/decode with per-macroblock QP maps.
class CodecBridge {
 public:
  explicit CodecBridge(BridgeConfig cfg);

  // Encode with the QP map, decode with the independent stock decoder, and
  // collect per-frame sizes and picture types.
  CodedClip encode_decode(const clips::VideoClip& clip, const QpMap& qp) const;

  // Same, but returns the raw Annex-B stream as well (for cmd encode paths).
  CodedClip encode_decode_bitstream(const clips::VideoClip& clip, const QpMap& qp,
                                    std::vector<uint8_t>* bitstream) const;

  // Encoder-native 2-pass average-bitrate mode at the target (bit/s).
  CodedClip two_pass_abr(const clips::VideoClip& clip, double target_bps) const;

  // Parses picture types from a probe encoding of the clip.
  GopStructure probe_gop(const clips::VideoClip& clip) const;

  // GOP fixture: probed once per (T, H, W) on a canonical synthetic clip and
  // cached; the surrogate's modeled structure.
  const GopStructure& gop_fixture(int64_t t, int64_t h, int64_t w) const;

  // Per-access-unit byte counts mapped to display order.
  static std::vector<int64_t> per_frame_sizes(const std::vector<uint8_t>& annexb);

  const BridgeConfig& config() const { return cfg_; }

  // Version string of the underlying encoder build, recorded in run metadata.
  static std::string encoder_version();

 private:
  std::vector<uint8_t> encode(const clips::VideoClip& clip, const QpMap* qp,
                              double target_bps) const;
  CodedClip decode_and_collect(const clips::VideoClip& clip,
                               const std::vector<uint8_t>& bs) const;

  BridgeConfig cfg_;
  mutable std::mutex gop_mutex_;
  mutable std::map<std::tuple<int64_t, int64_t, int64_t>, GopStructure> gop_cache_;
};

// Bandwidth of a coded clip assuming a constant stream over the clip's real
// duration: 8 * sum(bytes) * fps / (T * stride).
double realized_bitrate(const std::vector<int64_t>& sizes, double fps, int64_t t, int stride);

}  // namespace vidctl::codec
