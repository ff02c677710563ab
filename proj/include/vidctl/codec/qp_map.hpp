#pragma once

#include <string>

#include "vidctl/core/tensor.hpp"

namespace vidctl::codec {

inline constexpr int kQpMin = 0;
inline constexpr int kQpMax = 51;
inline constexpr int kQpLevels = 52;
inline constexpr int kMacroblock = 16;

// Integer QP map, one value per 16x16 macroblock: [T, H/16, W/16], each entry
// in [0, 51].
struct QpMap {
  core::Tensor<int> values;

  int64_t frames() const { return values.dim(0); }
  int64_t mb_h() const { return values.dim(1); }
  int64_t mb_w() const { return values.dim(2); }

  static QpMap uniform(int64_t t, int64_t mb_h, int64_t mb_w, int qp);

  // Throws ContractError on range or rank violations; when clip dims are
  // given, also checks the spatial correspondence.
  void validate(int64_t clip_h = -1, int64_t clip_w = -1) const;
};

// Sidecar text format consumed by the external encoder: one integer per
// macroblock, one per line, row-major within a frame, frames in display
// order.
std::string qp_sidecar_serialize(const QpMap& map);
QpMap qp_sidecar_parse(const std::string& text, int64_t t, int64_t mb_h, int64_t mb_w);
void qp_sidecar_write(const std::string& path, const QpMap& map);
QpMap qp_sidecar_read(const std::string& path, int64_t t, int64_t mb_h, int64_t mb_w);

}  // namespace vidctl::codec
