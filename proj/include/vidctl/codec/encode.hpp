#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vidctl/codec/qp_map.hpp"
#include "vidctl/codec/yuv.hpp"

namespace vidctl::codec {

// libx264 realization of macroblock-wise absolute QP with a stock encoder:
// the per-frame base QP is pinned to `base_qp` (crf with qcomp=1, flat
// ip/pb ratios, no mb-tree) and per-macroblock deltas ride on ROI side data,
// which this libavcodec build maps to quant offsets at qoffset*50. Together
// that realizes any integer map in [0, 51] exactly (modulo the encoder's
// final rounding). The same mechanism AccMPEG patches into FFmpeg directly.
struct EncodeParams {
  int width = 0, height = 0;
  int fps_num = 17, fps_den = 1;
  int gop = 8;
  std::string preset = "medium";
  int base_qp = 26;   // QP-map mode anchor; any value with |qp-base| <= 50 works
  int threads = 1;    // 1 keeps encodes bit-reproducible

  bool two_pass_abr = false;
  int64_t bitrate_bps = 0;          // two-pass mode target
  std::string stats_prefix;         // two-pass temp stats location
};

struct PacketInfo {
  int64_t pts = 0, dts = 0;
  int64_t size = 0;
  bool key = false;
};

// Encodes frames (display order) to an Annex-B elementary stream. `qp` must
// be null in two-pass mode and non-null in QP-map mode.
std::vector<uint8_t> encode_h264(const std::vector<Yuv420>& frames, const QpMap* qp,
                                 const EncodeParams& params,
                                 std::vector<PacketInfo>* packets = nullptr);

}  // namespace vidctl::codec
