#include "vidctl/codec/yuv.hpp"

#include <algorithm>
#include <cmath>

#include "vidctl/core/parallel.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::codec {

namespace {
inline uint8_t quant(float v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0f), 0l, 255l));
}
inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }
}  // namespace

Yuv420 rgb_to_yuv420(const core::Tensor<float>& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3)
    throw util::ContractError("rgb_to_yuv420: expected [3, H, W]");
  const int64_t h = rgb.dim(1), w = rgb.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw util::ContractError("rgb_to_yuv420: odd dimensions");
  Yuv420 out;
  out.width = w;
  out.height = h;
  out.y.resize(h * w);
  out.u.resize(h * w / 4);
  out.v.resize(h * w / 4);
  const float* r = rgb.data();
  const float* g = r + h * w;
  const float* b = g + h * w;
#pragma omp parallel for schedule(static) num_threads(core::num_threads()) \
    if (core::parallel_worthwhile(h * w))
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const int64_t p = i * w + j;
      out.y[p] = quant(0.299f * r[p] + 0.587f * g[p] + 0.114f * b[p]);
    }
  }
#pragma omp parallel for schedule(static) num_threads(core::num_threads()) \
    if (core::parallel_worthwhile(h * w / 4))
  for (int64_t i = 0; i < h / 2; ++i) {
    for (int64_t j = 0; j < w / 2; ++j) {
      float cb = 0, cr = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int64_t p = (2 * i + dy) * w + 2 * j + dx;
          const float yy = 0.299f * r[p] + 0.587f * g[p] + 0.114f * b[p];
          cb += 0.5f + (b[p] - yy) / 1.772f;
          cr += 0.5f + (r[p] - yy) / 1.402f;
        }
      out.u[i * (w / 2) + j] = quant(cb * 0.25f);
      out.v[i * (w / 2) + j] = quant(cr * 0.25f);
    }
  }
  return out;
}

core::Tensor<float> yuv420_to_rgb(const Yuv420& yuv) {
  const int64_t h = yuv.height, w = yuv.width;
  core::Tensor<float> rgb({3, h, w});
  float* r = rgb.data();
  float* g = r + h * w;
  float* b = g + h * w;
#pragma omp parallel for schedule(static) num_threads(core::num_threads()) \
    if (core::parallel_worthwhile(h * w))
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const int64_t p = i * w + j;
      const float y = yuv.y[p] / 255.0f;
      const float cb = yuv.u[(i / 2) * (w / 2) + j / 2] / 255.0f - 0.5f;
      const float cr = yuv.v[(i / 2) * (w / 2) + j / 2] / 255.0f - 0.5f;
      r[p] = clamp01(y + 1.402f * cr);
      g[p] = clamp01(y - 0.344136f * cb - 0.714136f * cr);
      b[p] = clamp01(y + 1.772f * cb);
    }
  }
  return rgb;
}

core::Tensor<float> yuv420_to_rgb_limited(const Yuv420& yuv) {
  const int64_t h = yuv.height, w = yuv.width;
  core::Tensor<float> rgb({3, h, w});
  float* r = rgb.data();
  float* g = r + h * w;
  float* b = g + h * w;
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const int64_t p = i * w + j;
      const float y = (yuv.y[p] - 16.0f) / 219.0f;
      const float cb = (yuv.u[(i / 2) * (w / 2) + j / 2] - 128.0f) / 224.0f;
      const float cr = (yuv.v[(i / 2) * (w / 2) + j / 2] - 128.0f) / 224.0f;
      r[p] = clamp01(y + 1.402f * cr);
      g[p] = clamp01(y - 0.344136f * cb - 0.714136f * cr);
      b[p] = clamp01(y + 1.772f * cb);
    }
  }
  return rgb;
}

}  // namespace vidctl::codec
