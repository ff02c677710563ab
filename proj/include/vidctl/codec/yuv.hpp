#pragma once

#include <cstdint>
#include <vector>

#include "vidctl/core/tensor.hpp"

namespace vidctl::codec {

// 8-bit planar YUV 4:2:0 image.
struct Yuv420 {
  int64_t width = 0, height = 0;
  std::vector<uint8_t> y, u, v;  // y: H*W, u/v: (H/2)*(W/2)
};

// RGB [0,1] <-> YUV 4:2:0 with BT.601 coefficients, full range:
//   Y  = 0.299 R + 0.587 G + 0.114 B
//   Cb = 0.5 + (B - Y) / 1.772
//   Cr = 0.5 + (R - Y) / 1.402
// Chroma is downsampled by 2x2 averaging and upsampled by replication.
Yuv420 rgb_to_yuv420(const core::Tensor<float>& rgb);  // [3, H, W]
core::Tensor<float> yuv420_to_rgb(const Yuv420& yuv);

// Limited-range (studio swing) variant used when decoding foreign streams
// that are not flagged full-range.
core::Tensor<float> yuv420_to_rgb_limited(const Yuv420& yuv);

}  // namespace vidctl::codec
