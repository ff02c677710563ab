#include "vidctl/codec/decode.hpp"

extern "C" {
#include <libavcodec/avcodec.h>
}

#include "vidctl/codec/annexb.hpp"
#include "vidctl/codec/yuv.hpp"
#include "vidctl/util/errors.hpp"

namespace vidctl::codec {

using util::BitstreamParseError;
using util::BridgeError;

namespace {

core::Tensor<float> decoded_frame_to_rgb(const AVFrame* f) {
  if (f->format != AV_PIX_FMT_YUV420P && f->format != AV_PIX_FMT_YUVJ420P)
    throw BridgeError("decoder produced unexpected pixel format");
  Yuv420 img;
  img.width = f->width;
  img.height = f->height;
  img.y.resize(img.width * img.height);
  img.u.resize(img.width * img.height / 4);
  img.v.resize(img.width * img.height / 4);
  for (int64_t i = 0; i < img.height; ++i)
    std::memcpy(img.y.data() + i * img.width, f->data[0] + i * f->linesize[0],
                static_cast<size_t>(img.width));
  for (int64_t i = 0; i < img.height / 2; ++i) {
    std::memcpy(img.u.data() + i * img.width / 2, f->data[1] + i * f->linesize[1],
                static_cast<size_t>(img.width / 2));
    std::memcpy(img.v.data() + i * img.width / 2, f->data[2] + i * f->linesize[2],
                static_cast<size_t>(img.width / 2));
  }
  const bool full = f->color_range == AVCOL_RANGE_JPEG || f->format == AV_PIX_FMT_YUVJ420P;
  return full ? yuv420_to_rgb(img) : yuv420_to_rgb_limited(img);
}

char pict_type_char(AVPictureType t) {
  switch (t) {
    case AV_PICTURE_TYPE_I:
      return 'I';
    case AV_PICTURE_TYPE_P:
      return 'P';
    case AV_PICTURE_TYPE_B:
      return 'B';
    default:
      return '?';
  }
}

}  // namespace

DecodedStream decode_h264(const std::vector<uint8_t>& annexb) {
  const std::vector<AccessUnit> aus = split_access_units(annexb);

  const AVCodec* codec = avcodec_find_decoder(AV_CODEC_ID_H264);
  if (!codec) throw BridgeError("h264 decoder not available");
  AVCodecContext* ctx = avcodec_alloc_context3(codec);
  ctx->thread_count = 1;
  // fail loudly on damaged streams instead of concealing
  ctx->err_recognition = AV_EF_EXPLODE;
  if (avcodec_open2(ctx, codec, nullptr) < 0) {
    avcodec_free_context(&ctx);
    throw BridgeError("cannot open h264 decoder");
  }

  DecodedStream out;
  AVPacket* pkt = av_packet_alloc();
  AVFrame* frame = av_frame_alloc();
  auto drain = [&]() {
    while (avcodec_receive_frame(ctx, frame) == 0) {
      out.frames.push_back(decoded_frame_to_rgb(frame));
      out.picture_types.push_back(pict_type_char(frame->pict_type));
      out.decode_order.push_back(frame->pts);
    }
  };
  int rc = 0;
  for (size_t i = 0; i < aus.size() && rc >= 0; ++i) {
    av_packet_unref(pkt);
    av_new_packet(pkt, static_cast<int>(aus[i].size));
    std::memcpy(pkt->data, annexb.data() + aus[i].offset, static_cast<size_t>(aus[i].size));
    pkt->pts = static_cast<int64_t>(i);
    pkt->dts = static_cast<int64_t>(i);
    rc = avcodec_send_packet(ctx, pkt);
    if (rc == 0) drain();
  }
  if (rc >= 0) {
    avcodec_send_packet(ctx, nullptr);
    drain();
  }
  av_packet_free(&pkt);
  av_frame_free(&frame);
  avcodec_free_context(&ctx);

  if (rc < 0 || out.frames.size() != aus.size())
    throw BitstreamParseError("h264 stream truncated or undecodable (" +
                              std::to_string(out.frames.size()) + " frames from " +
                              std::to_string(aus.size()) + " access units)");
  return out;
}

}  // namespace vidctl::codec
