#include "vidctl/codec/encode.hpp"

extern "C" {
#include <libavcodec/avcodec.h>
#include <libavutil/frame.h>
#include <libavutil/opt.h>
}

#include <cstring>
#include <sstream>

#include "vidctl/util/errors.hpp"

namespace vidctl::codec {

using util::BridgeError;
using util::ContractError;

namespace {

// Empirically verified mapping of AVRegionOfInterest.qoffset to x264 quant
// offsets on this libavcodec build: delta_qp = qoffset * 50.
constexpr int kQoffsetScale = 50;

struct EncoderHandle {
  AVCodecContext* ctx = nullptr;
  ~EncoderHandle() {
    if (ctx) avcodec_free_context(&ctx);
  }
};

void fill_yuv_frame(AVFrame* fr, const Yuv420& img) {
  for (int64_t i = 0; i < img.height; ++i)
    std::memcpy(fr->data[0] + i * fr->linesize[0], img.y.data() + i * img.width,
                static_cast<size_t>(img.width));
  for (int64_t i = 0; i < img.height / 2; ++i) {
    std::memcpy(fr->data[1] + i * fr->linesize[1], img.u.data() + i * img.width / 2,
                static_cast<size_t>(img.width / 2));
    std::memcpy(fr->data[2] + i * fr->linesize[2], img.v.data() + i * img.width / 2,
                static_cast<size_t>(img.width / 2));
  }
}

void attach_qp_roi(AVFrame* fr, const QpMap& qp, int64_t t, int base_qp) {
  const int64_t mb_h = qp.mb_h(), mb_w = qp.mb_w();
  const size_t roi_size = sizeof(AVRegionOfInterest);
  AVBufferRef* buf = av_buffer_alloc(roi_size * mb_h * mb_w);
  if (!buf) throw BridgeError("cannot allocate ROI side data");
  auto* roi = reinterpret_cast<AVRegionOfInterest*>(buf->data);
  for (int64_t my = 0; my < mb_h; ++my)
    for (int64_t mx = 0; mx < mb_w; ++mx) {
      AVRegionOfInterest* r = &roi[my * mb_w + mx];
      r->self_size = static_cast<uint32_t>(roi_size);
      r->top = static_cast<int>(my * kMacroblock);
      r->bottom = static_cast<int>((my + 1) * kMacroblock);
      r->left = static_cast<int>(mx * kMacroblock);
      r->right = static_cast<int>((mx + 1) * kMacroblock);
      const int delta = qp.values.at(t, my, mx) - base_qp;
      r->qoffset = AVRational{delta, kQoffsetScale};
    }
  if (!av_frame_new_side_data_from_buf(fr, AV_FRAME_DATA_REGIONS_OF_INTEREST, buf)) {
    av_buffer_unref(&buf);
    throw BridgeError("cannot attach ROI side data");
  }
}

std::string x264_param_string(const EncodeParams& p, int pass) {
  std::ostringstream ss;
  ss << "scenecut=0:min-keyint=" << p.gop;
  if (p.two_pass_abr) {
    ss << ":pass=" << pass << ":stats=" << p.stats_prefix;
  } else {
    // pin the per-frame base QP to base_qp and let ROI offsets set per-MB QP
    ss << ":crf=" << p.base_qp
       << ":qcomp=1.0:ipratio=1.0:pbratio=1.0:mbtree=0:aq-mode=1:aq-strength=0.01";
  }
  return ss.str();
}

void run_pass(const std::vector<Yuv420>& frames, const QpMap* qp, const EncodeParams& p, int pass,
              std::vector<uint8_t>* out, std::vector<PacketInfo>* packets) {
  const AVCodec* codec = avcodec_find_encoder_by_name("libx264");
  if (!codec) throw BridgeError("libx264 encoder not available in libavcodec");
  EncoderHandle enc;
  enc.ctx = avcodec_alloc_context3(codec);
  AVCodecContext* ctx = enc.ctx;
  ctx->width = p.width;
  ctx->height = p.height;
  ctx->time_base = AVRational{p.fps_den, p.fps_num};
  ctx->framerate = AVRational{p.fps_num, p.fps_den};
  ctx->pix_fmt = AV_PIX_FMT_YUV420P;
  ctx->color_range = AVCOL_RANGE_JPEG;
  ctx->gop_size = p.gop;
  ctx->max_b_frames = 16;  // cap only; the preset picks the actual count
  ctx->thread_count = p.threads;
  if (p.two_pass_abr) ctx->bit_rate = p.bitrate_bps;
  av_opt_set(ctx->priv_data, "preset", p.preset.c_str(), 0);
  av_opt_set(ctx->priv_data, "x264-params", x264_param_string(p, pass).c_str(), 0);
  if (avcodec_open2(ctx, codec, nullptr) < 0)
    throw BridgeError("cannot open libx264 encoder (preset=" + p.preset + ")");

  AVFrame* fr = av_frame_alloc();
  AVPacket* pkt = av_packet_alloc();
  const int64_t t_count = static_cast<int64_t>(frames.size());
  int rc = 0;
  for (int64_t t = 0; t <= t_count && rc == 0; ++t) {
    AVFrame* send = nullptr;
    if (t < t_count) {
      av_frame_unref(fr);
      fr->format = ctx->pix_fmt;
      fr->width = p.width;
      fr->height = p.height;
      fr->color_range = AVCOL_RANGE_JPEG;
      if (av_frame_get_buffer(fr, 0) < 0) {
        rc = -1;
        break;
      }
      fill_yuv_frame(fr, frames[t]);
      fr->pts = t;
      if (qp) attach_qp_roi(fr, *qp, t, p.base_qp);
      send = fr;
    }
    rc = avcodec_send_frame(ctx, send);
    while (rc == 0) {
      const int r = avcodec_receive_packet(ctx, pkt);
      if (r == AVERROR(EAGAIN) || r == AVERROR_EOF) break;
      if (r < 0) {
        rc = r;
        break;
      }
      if (out) out->insert(out->end(), pkt->data, pkt->data + pkt->size);
      if (packets)
        packets->push_back(PacketInfo{pkt->pts, pkt->dts, pkt->size,
                                      (pkt->flags & AV_PKT_FLAG_KEY) != 0});
      av_packet_unref(pkt);
    }
  }
  av_packet_free(&pkt);
  av_frame_free(&fr);
  if (rc != 0) throw BridgeError("libx264 encode failed (code " + std::to_string(rc) + ")");
}

}  // namespace

std::vector<uint8_t> encode_h264(const std::vector<Yuv420>& frames, const QpMap* qp,
                                 const EncodeParams& params, std::vector<PacketInfo>* packets) {
  if (frames.empty()) throw ContractError("encode_h264: no frames");
  if (params.width <= 0 || params.height <= 0 || params.width % 16 || params.height % 16)
    throw ContractError("encode_h264: dimensions must be positive multiples of 16");
  for (const auto& f : frames)
    if (f.width != params.width || f.height != params.height)
      throw ContractError("encode_h264: frame size mismatch");
  if (params.two_pass_abr) {
    if (qp) throw ContractError("encode_h264: QP map not applicable in two-pass mode");
    if (params.bitrate_bps <= 0) throw ContractError("encode_h264: bitrate must be positive");
    if (params.stats_prefix.empty())
      throw ContractError("encode_h264: two-pass mode needs a stats path");
  } else {
    if (!qp) throw ContractError("encode_h264: QP map required");
    qp->validate(params.height, params.width);
    if (qp->frames() != static_cast<int64_t>(frames.size()))
      throw ContractError("encode_h264: QP map frame count mismatch");
  }

  std::vector<uint8_t> out;
  if (params.two_pass_abr) {
    run_pass(frames, nullptr, params, 1, nullptr, nullptr);
    run_pass(frames, nullptr, params, 2, &out, packets);
  } else {
    run_pass(frames, qp, params, 0, &out, packets);
  }
  return out;
}

}  // namespace vidctl::codec
