#pragma once

#include <cstdint>
#include <vector>

#include "vidctl/core/tensor.hpp"

namespace vidctl::codec {

// Output of the stock (independent) H.264 decoder, in display order.
struct DecodedStream {
  std::vector<core::Tensor<float>> frames;  // each [3, H, W], RGB in [0, 1]
  std::vector<char> picture_types;          // 'I' / 'P' / 'B'
  std::vector<int64_t> decode_order;        // display idx -> decode-order AU idx
};

// Decodes an Annex-B elementary stream with libavcodec's native h264
// decoder. Throws BitstreamParseError if the stream cannot be fully decoded
// (e.g. truncated input) and BridgeError on decoder setup failure.
DecodedStream decode_h264(const std::vector<uint8_t>& annexb);

}  // namespace vidctl::codec
