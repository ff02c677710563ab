#pragma once

#include "vidctl/codec/qp_map.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::surrogate {

// One-hot / relaxed QP encoding [52, T, H/16, W/16]. Rows along the 52-axis
// form a simplex per macroblock; hard means exactly one entry is 1.
template <typename T>
struct QpOneHot {
  core::Tensor<T> values;
  bool hard = true;

  static QpOneHot from_map(const codec::QpMap& map) {
    QpOneHot oh;
    const int64_t t = map.frames(), h = map.mb_h(), w = map.mb_w();
    oh.values = core::Tensor<T>::zeros({codec::kQpLevels, t, h, w});
    for (int64_t i = 0; i < map.values.numel(); ++i)
      oh.values[static_cast<int64_t>(map.values[i]) * t * h * w + i] = T(1);
    oh.hard = true;
    return oh;
  }

  codec::QpMap to_map() const {
    const int64_t thw = values.numel() / codec::kQpLevels;
    codec::QpMap map;
    map.values = core::Tensor<int>({values.dim(1), values.dim(2), values.dim(3)});
    for (int64_t i = 0; i < thw; ++i) {
      int best = 0;
      T bv = values[i];
      for (int q = 1; q < codec::kQpLevels; ++q)
        if (values[q * thw + i] > bv) {
          bv = values[q * thw + i];
          best = q;
        }
      map.values[i] = best;
    }
    return map;
  }

  void validate(T tol = T(1e-4)) const {
    if (values.ndim() != 4 || values.dim(0) != codec::kQpLevels)
      throw util::ContractError("QpOneHot: expected [52, T, H/16, W/16]");
    const int64_t thw = values.numel() / codec::kQpLevels;
    for (int64_t i = 0; i < thw; ++i) {
      T sum = T(0);
      for (int q = 0; q < codec::kQpLevels; ++q) {
        const T v = values[q * thw + i];
        if (v < T(0) || v > T(1) + tol)
          throw util::ContractError("QpOneHot: entry outside [0, 1]");
        if (hard && v != T(0) && v != T(1))
          throw util::ContractError("QpOneHot: hard flag with fractional entry");
        sum += v;
      }
      if (std::abs(sum - T(1)) > tol)
        throw util::ContractError("QpOneHot: simplex violation (sum != 1)");
    }
  }
};

}  // namespace vidctl::surrogate
