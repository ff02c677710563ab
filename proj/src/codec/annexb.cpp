#include "vidctl/codec/annexb.hpp"

#include "vidctl/util/errors.hpp"

namespace vidctl::codec {

using util::BitstreamParseError;

namespace {

// Exp-Golomb reader over a short de-escaped prefix of a NAL payload.
class BitReader {
 public:
  BitReader(const uint8_t* data, int64_t size) {
    // strip emulation prevention bytes (00 00 03 -> 00 00)
    int zeros = 0;
    for (int64_t i = 0; i < size && bytes_.size() < 16; ++i) {
      if (zeros >= 2 && data[i] == 0x03) {
        zeros = 0;
        continue;
      }
      zeros = data[i] == 0 ? zeros + 1 : 0;
      bytes_.push_back(data[i]);
    }
  }

  int bit() {
    const size_t byte = pos_ >> 3;
    if (byte >= bytes_.size()) throw BitstreamParseError("slice header: out of bits");
    const int b = (bytes_[byte] >> (7 - (pos_ & 7))) & 1;
    ++pos_;
    return b;
  }

  uint32_t ue() {
    int zeros = 0;
    while (bit() == 0) {
      if (++zeros > 31) throw BitstreamParseError("slice header: bad exp-golomb");
    }
    uint32_t v = 1;
    for (int i = 0; i < zeros; ++i) v = (v << 1) | static_cast<uint32_t>(bit());
    return v - 1;
  }

 private:
  std::vector<uint8_t> bytes_;
  size_t pos_ = 0;
};

char slice_type_to_picture(uint32_t slice_type) {
  switch (slice_type % 5) {
    case 0:
      return 'P';
    case 1:
      return 'B';
    case 2:
      return 'I';
    case 3:
      return 'P';  // SP
    default:
      return 'I';  // SI
  }
}

}  // namespace

std::vector<NalUnit> split_nal_units(const std::vector<uint8_t>& bs) {
  std::vector<NalUnit> nals;
  const int64_t n = static_cast<int64_t>(bs.size());
  if (n < 4) throw BitstreamParseError("stream too short");

  std::vector<int64_t> starts;   // offset of each start code
  std::vector<int64_t> payloads; // offset of the NAL header byte
  for (int64_t i = 0; i + 2 < n;) {
    if (bs[i] == 0 && bs[i + 1] == 0 && bs[i + 2] == 1) {
      int64_t sc = i;
      if (!starts.empty() || i == 0 || (i >= 1 && bs[i - 1] == 0)) {
        if (i >= 1 && bs[i - 1] == 0) sc = i - 1;  // 4-byte start code
      }
      starts.push_back(sc);
      payloads.push_back(i + 3);
      i += 3;
    } else {
      i += (bs[i + 2] > 1) ? 3 : 1;
    }
  }
  if (starts.empty() || starts[0] != 0)
    throw BitstreamParseError("no Annex-B start code at stream head");

  for (size_t k = 0; k < starts.size(); ++k) {
    const int64_t end = (k + 1 < starts.size()) ? starts[k + 1] : n;
    NalUnit nal;
    nal.offset = starts[k];
    nal.size = end - starts[k];
    const int64_t hdr = payloads[k];
    if (hdr >= end) throw BitstreamParseError("truncated NAL unit");
    nal.type = bs[hdr] & 0x1f;
    nal.vcl = nal.type >= 1 && nal.type <= 5;
    if (nal.vcl) {
      if (hdr + 1 >= end) throw BitstreamParseError("truncated slice NAL");
      BitReader br(bs.data() + hdr + 1, end - hdr - 1);
      const uint32_t first_mb = br.ue();
      const uint32_t slice_type = br.ue();
      nal.first_mb_zero = first_mb == 0;
      nal.slice_type = static_cast<int>(slice_type);
    }
    nals.push_back(nal);
  }
  return nals;
}

std::vector<AccessUnit> split_access_units(const std::vector<uint8_t>& bs) {
  const std::vector<NalUnit> nals = split_nal_units(bs);
  std::vector<AccessUnit> aus;
  AccessUnit cur;
  bool open = false, cur_has_vcl = false;

  auto flush = [&](int64_t end_offset) {
    if (!open) return;
    if (!cur_has_vcl) throw BitstreamParseError("access unit without slice data");
    cur.size = end_offset - cur.offset;
    aus.push_back(cur);
    open = false;
    cur_has_vcl = false;
  };

  for (const auto& nal : nals) {
    const bool delimiter_like =
        nal.type == 6 || nal.type == 7 || nal.type == 8 || nal.type == 9;
    const bool starts_new_picture = nal.vcl && nal.first_mb_zero;
    if (cur_has_vcl && (delimiter_like || starts_new_picture)) flush(nal.offset);
    if (!open) {
      cur = AccessUnit{};
      cur.offset = nal.offset;
      open = true;
    }
    if (nal.vcl) {
      if (!cur_has_vcl) {
        cur.picture_type = slice_type_to_picture(static_cast<uint32_t>(nal.slice_type));
        cur.idr = nal.type == 5;
      }
      cur_has_vcl = true;
    }
  }
  flush(static_cast<int64_t>(bs.size()));
  if (aus.empty()) throw BitstreamParseError("no access units found");
  return aus;
}

}  // namespace vidctl::codec
