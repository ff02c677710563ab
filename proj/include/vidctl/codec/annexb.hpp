#pragma once

#include <cstdint>
#include <vector>

namespace vidctl::codec {

// One H.264 Annex-B NAL unit (offset points at the start code).
struct NalUnit {
  int64_t offset = 0;     // byte offset of the start code
  int64_t size = 0;       // start code + payload
  int type = 0;           // nal_unit_type
  bool vcl = false;       // types 1..5
  bool first_mb_zero = false;  // VCL only: first_mb_in_slice == 0
  int slice_type = -1;    // VCL only: 0/5 P, 1/6 B, 2/7 I
};

// One access unit: contiguous byte range covering every NAL that belongs to
// a single coded picture, including leading SPS/PPS/SEI.
struct AccessUnit {
  int64_t offset = 0;
  int64_t size = 0;
  char picture_type = '?';  // from the primary slice: 'I', 'P', or 'B'
  bool idr = false;
};

std::vector<NalUnit> split_nal_units(const std::vector<uint8_t>& annexb);

// Splits a raw Annex-B elementary stream into access units (decode order).
// Throws BitstreamParseError on malformed or truncated input.
std::vector<AccessUnit> split_access_units(const std::vector<uint8_t>& annexb);

}  // namespace vidctl::codec
