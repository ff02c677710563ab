#include "vidctl/clipstore/video_io.hpp"

extern "C" {
#include <libavcodec/avcodec.h>
#include <libavformat/avformat.h>
#include <libavutil/imgutils.h>
}

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "vidctl/codec/yuv.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::clips {

namespace fs = std::filesystem;
using util::EmptyInputError;
using util::IoError;

namespace {

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

// Converts a decoded AVFrame to an RGB float tensor [3, H, W].
core::Tensor<float> frame_to_rgb(const AVFrame* f) {
  const int64_t h = f->height, w = f->width;
  core::Tensor<float> rgb({3, h, w});
  float* r = rgb.data();
  float* g = r + h * w;
  float* b = g + h * w;
  const auto fmt = static_cast<AVPixelFormat>(f->format);

  auto from_yuv_planar = [&](int sub_x, int sub_y, bool full_range) {
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const int64_t p = i * w + j;
        float y, cb, cr;
        const uint8_t y8 = f->data[0][i * f->linesize[0] + j];
        const uint8_t u8 = f->data[1][(i >> sub_y) * f->linesize[1] + (j >> sub_x)];
        const uint8_t v8 = f->data[2][(i >> sub_y) * f->linesize[2] + (j >> sub_x)];
        if (full_range) {
          y = y8 / 255.0f;
          cb = u8 / 255.0f - 0.5f;
          cr = v8 / 255.0f - 0.5f;
        } else {
          y = (y8 - 16.0f) / 219.0f;
          cb = (u8 - 128.0f) / 224.0f;
          cr = (v8 - 128.0f) / 224.0f;
        }
        r[p] = clamp01(y + 1.402f * cr);
        g[p] = clamp01(y - 0.344136f * cb - 0.714136f * cr);
        b[p] = clamp01(y + 1.772f * cb);
      }
  };

  const bool full = f->color_range == AVCOL_RANGE_JPEG;
  switch (fmt) {
    case AV_PIX_FMT_YUV420P:
      from_yuv_planar(1, 1, full);
      break;
    case AV_PIX_FMT_YUVJ420P:
      from_yuv_planar(1, 1, true);
      break;
    case AV_PIX_FMT_YUV444P:
      from_yuv_planar(0, 0, full);
      break;
    case AV_PIX_FMT_YUVJ444P:
      from_yuv_planar(0, 0, true);
      break;
    case AV_PIX_FMT_YUV422P:
      from_yuv_planar(1, 0, full);
      break;
    case AV_PIX_FMT_YUVJ422P:
      from_yuv_planar(1, 0, true);
      break;
    case AV_PIX_FMT_RGB24:
    case AV_PIX_FMT_RGBA:
    case AV_PIX_FMT_RGB0: {
      const int step = (fmt == AV_PIX_FMT_RGB24) ? 3 : 4;
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const uint8_t* px = f->data[0] + i * f->linesize[0] + j * step;
          const int64_t p = i * w + j;
          r[p] = px[0] / 255.0f;
          g[p] = px[1] / 255.0f;
          b[p] = px[2] / 255.0f;
        }
      break;
    }
    case AV_PIX_FMT_GRAY8:
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
          const float v = f->data[0][i * f->linesize[0] + j] / 255.0f;
          const int64_t p = i * w + j;
          r[p] = g[p] = b[p] = v;
        }
      break;
    default:
      throw IoError(std::string("unsupported pixel format: ") +
                    (av_get_pix_fmt_name(fmt) ? av_get_pix_fmt_name(fmt) : "?"));
  }
  return rgb;
}

struct DecodedVideo {
  std::vector<core::Tensor<float>> frames;
  double fps = 0.0;
};

DecodedVideo decode_file(const std::string& path) {
  AVFormatContext* fmt = nullptr;
  if (avformat_open_input(&fmt, path.c_str(), nullptr, nullptr) < 0)
    throw IoError("cannot open video: " + path);
  DecodedVideo out;
  const AVCodec* codec = nullptr;
  AVCodecContext* ctx = nullptr;
  AVPacket* pkt = nullptr;
  AVFrame* frame = nullptr;
  try {
    if (avformat_find_stream_info(fmt, nullptr) < 0)
      throw IoError("cannot read stream info: " + path);
    AVCodec* found = nullptr;
    const int stream = av_find_best_stream(fmt, AVMEDIA_TYPE_VIDEO, -1, -1, &found, 0);
    codec = found;
    if (stream < 0 || !codec) throw IoError("no decodable video stream: " + path);
    AVStream* st = fmt->streams[stream];
    ctx = avcodec_alloc_context3(codec);
    avcodec_parameters_to_context(ctx, st->codecpar);
    ctx->thread_count = 1;
    if (avcodec_open2(ctx, codec, nullptr) < 0) throw IoError("cannot open decoder: " + path);
    if (st->avg_frame_rate.den > 0 && st->avg_frame_rate.num > 0)
      out.fps = av_q2d(st->avg_frame_rate);

    pkt = av_packet_alloc();
    frame = av_frame_alloc();
    auto drain = [&]() {
      while (avcodec_receive_frame(ctx, frame) == 0) out.frames.push_back(frame_to_rgb(frame));
    };
    while (av_read_frame(fmt, pkt) >= 0) {
      if (pkt->stream_index == stream) {
        avcodec_send_packet(ctx, pkt);
        drain();
      }
      av_packet_unref(pkt);
    }
    avcodec_send_packet(ctx, nullptr);
    drain();
  } catch (...) {
    if (frame) av_frame_free(&frame);
    if (pkt) av_packet_free(&pkt);
    if (ctx) avcodec_free_context(&ctx);
    avformat_close_input(&fmt);
    throw;
  }
  av_frame_free(&frame);
  av_packet_free(&pkt);
  avcodec_free_context(&ctx);
  avformat_close_input(&fmt);
  return out;
}

bool is_image_name(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

FrameSequence load_video(const std::string& path, double fps_hint) {
  std::vector<core::Tensor<float>> frames;
  double fps = fps_hint;

  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && is_image_name(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyInputError("no image frames in directory: " + path);
    for (const auto& f : files) {
      DecodedVideo one = decode_file(f.string());
      if (one.frames.empty()) throw IoError("image produced no frame: " + f.string());
      frames.push_back(std::move(one.frames[0]));
    }
    if (fps <= 0)
      throw util::ContractError("load_video: image directory input requires fps > 0");
  } else {
    if (!fs::exists(path, ec)) throw IoError("no such file: " + path);
    DecodedVideo dec = decode_file(path);
    frames = std::move(dec.frames);
    if (fps <= 0) fps = dec.fps;
    if (fps <= 0) throw util::ContractError("load_video: stream has no frame rate, pass fps");
  }
  if (frames.empty()) throw EmptyInputError("video has zero frames: " + path);

  const int64_t h = frames[0].dim(1), w = frames[0].dim(2);
  FrameSequence seq;
  seq.frames = core::Tensor<float>({static_cast<int64_t>(frames.size()), 3, h, w});
  for (size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].dim(1) != h || frames[i].dim(2) != w)
      throw IoError("inconsistent frame sizes in: " + path);
    std::memcpy(seq.frames.data() + static_cast<int64_t>(i) * 3 * h * w, frames[i].data(),
                sizeof(float) * static_cast<size_t>(3 * h * w));
  }
  seq.fps = fps;
  seq.source_id = path;
  return seq;
}

void write_png(const std::string& path, const core::Tensor<float>& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw util::ContractError("write_png: expected [3,H,W]");
  const int64_t h = rgb.dim(1), w = rgb.dim(2);
  const AVCodec* codec = avcodec_find_encoder(AV_CODEC_ID_PNG);
  if (!codec) throw IoError("png encoder unavailable");
  AVCodecContext* ctx = avcodec_alloc_context3(codec);
  ctx->width = static_cast<int>(w);
  ctx->height = static_cast<int>(h);
  ctx->pix_fmt = AV_PIX_FMT_RGB24;
  ctx->time_base = {1, 25};
  if (avcodec_open2(ctx, codec, nullptr) < 0) {
    avcodec_free_context(&ctx);
    throw IoError("cannot open png encoder");
  }
  AVFrame* frame = av_frame_alloc();
  frame->format = ctx->pix_fmt;
  frame->width = ctx->width;
  frame->height = ctx->height;
  av_frame_get_buffer(frame, 0);
  const float* r = rgb.data();
  const float* g = r + h * w;
  const float* b = g + h * w;
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      uint8_t* px = frame->data[0] + i * frame->linesize[0] + j * 3;
      px[0] = static_cast<uint8_t>(std::clamp(std::lround(r[i * w + j] * 255.0f), 0l, 255l));
      px[1] = static_cast<uint8_t>(std::clamp(std::lround(g[i * w + j] * 255.0f), 0l, 255l));
      px[2] = static_cast<uint8_t>(std::clamp(std::lround(b[i * w + j] * 255.0f), 0l, 255l));
    }
  frame->pts = 0;
  AVPacket* pkt = av_packet_alloc();
  bool ok = avcodec_send_frame(ctx, frame) == 0 && avcodec_receive_packet(ctx, pkt) == 0;
  if (ok) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) ok = false;
    else {
      ok = std::fwrite(pkt->data, 1, pkt->size, f) == static_cast<size_t>(pkt->size);
      std::fclose(f);
    }
  }
  av_packet_free(&pkt);
  av_frame_free(&frame);
  avcodec_free_context(&ctx);
  if (!ok) throw IoError("failed to write png: " + path);
}

FrameSequence synthesize_sequence(int64_t frames, int64_t height, int64_t width, uint64_t seed) {
  core::Rng rng(seed);
  struct Patch {
    double x, y, vx, vy, size, freq, phase;
    float r, g, b;
  };
  std::vector<Patch> patches;
  const int n_patches = 3 + static_cast<int>(rng.uniform_int(0, 2));
  for (int i = 0; i < n_patches; ++i) {
    Patch p;
    p.x = rng.uniform(0.1, 0.9) * width;
    p.y = rng.uniform(0.1, 0.9) * height;
    p.vx = rng.uniform(-2.5, 2.5);
    p.vy = rng.uniform(-2.0, 2.0);
    p.size = rng.uniform(0.12, 0.3) * std::min(width, height);
    p.freq = rng.uniform(0.2, 0.9);
    p.phase = rng.uniform(0, 2 * M_PI);
    p.r = static_cast<float>(rng.uniform(0.2, 1.0));
    p.g = static_cast<float>(rng.uniform(0.2, 1.0));
    p.b = static_cast<float>(rng.uniform(0.2, 1.0));
    patches.push_back(p);
  }
  const double bgf1 = rng.uniform(0.02, 0.06), bgf2 = rng.uniform(0.02, 0.06);
  const double drift = rng.uniform(0.5, 2.0);
  const double texf = rng.uniform(0.4, 1.1);

  FrameSequence seq;
  seq.frames = core::Tensor<float>({frames, 3, height, width});
  seq.fps = 17.0;
  seq.source_id = "synthetic:" + std::to_string(seed);
  for (int64_t t = 0; t < frames; ++t) {
    float* r = seq.frames.data() + t * 3 * height * width;
    float* g = r + height * width;
    float* b = g + height * width;
    for (int64_t i = 0; i < height; ++i)
      for (int64_t j = 0; j < width; ++j) {
        const int64_t p = i * width + j;
        const double base =
            0.45 + 0.2 * std::sin(bgf1 * (j + drift * t)) * std::cos(bgf2 * (i - drift * t));
        // fine deterministic texture so the bitstream is never trivial
        const double tex = 0.05 * std::sin(texf * j + 0.7 * i + 0.3 * t) +
                           0.03 * (((j * 7 + i * 13 + t * 5) % 11) / 11.0 - 0.5);
        float rr = static_cast<float>(base + tex);
        float gg = static_cast<float>(base * 0.9 + tex);
        float bb = static_cast<float>(base * 1.1 - tex);
        for (const auto& pa : patches) {
          const double cx = pa.x + pa.vx * t, cy = pa.y + pa.vy * t;
          const double d2 = (j - cx) * (j - cx) + (i - cy) * (i - cy);
          if (d2 < pa.size * pa.size) {
            const double fall = 1.0 - std::sqrt(d2) / pa.size;
            const double stripes = 0.5 + 0.5 * std::sin(pa.freq * (j + i) + pa.phase);
            rr += static_cast<float>(fall * stripes * pa.r * 0.6);
            gg += static_cast<float>(fall * stripes * pa.g * 0.6);
            bb += static_cast<float>(fall * (1 - stripes) * pa.b * 0.6);
          }
        }
        r[p] = clamp01(rr);
        g[p] = clamp01(gg);
        b[p] = clamp01(bb);
      }
  }
  return seq;
}

}  // namespace vidctl::clips
