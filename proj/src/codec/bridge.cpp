#include "vidctl/codec/bridge.hpp"

extern "C" {
#include <libavutil/avutil.h>
}

#include <cstring>
#include <filesystem>
#include <fstream>

#include "vidctl/clipstore/video_io.hpp"
#include "vidctl/codec/annexb.hpp"
#include "vidctl/codec/decode.hpp"
#include "vidctl/codec/encode.hpp"
#include "vidctl/codec/yuv.hpp"
#include "vidctl/util/errors.hpp"
#include "vidctl/util/subprocess.hpp"

namespace vidctl::codec {

namespace fs = std::filesystem;
using util::BridgeError;
using util::ContractError;

GopStructure GopStructure::from_types(const std::vector<char>& types) {
  GopStructure g;
  g.gop_size = static_cast<int>(types.size());
  g.picture_types = types;
  g.reference_map.resize(types.size());
  auto is_ref = [&](int i) { return types[i] == 'I' || types[i] == 'P'; };
  for (int t = 0; t < static_cast<int>(types.size()); ++t) {
    if (types[t] == 'I') continue;
    int prev = -1, next = -1;
    for (int j = t - 1; j >= 0; --j)
      if (is_ref(j)) {
        prev = j;
        break;
      }
    for (int j = t + 1; j < static_cast<int>(types.size()); ++j)
      if (is_ref(j)) {
        next = j;
        break;
      }
    if (types[t] == 'P') {
      if (prev < 0) throw BridgeError("GOP: P frame without a previous reference");
      g.reference_map[t] = {prev};
    } else if (types[t] == 'B') {
      if (prev < 0) throw BridgeError("GOP: B frame without a previous reference");
      // a trailing B keeps only its previous reference if nothing follows
      if (next >= 0)
        g.reference_map[t] = {prev, next};
      else
        g.reference_map[t] = {prev};
    } else {
      throw BridgeError("GOP: unknown picture type");
    }
  }
  g.validate();
  return g;
}

void GopStructure::validate() const {
  if (picture_types.empty() || picture_types[0] != 'I')
    throw BridgeError("GOP: first frame must be an I frame");
  for (size_t t = 0; t < picture_types.size(); ++t) {
    const auto& refs = reference_map[t];
    switch (picture_types[t]) {
      case 'I':
        if (!refs.empty()) throw BridgeError("GOP: I frame with references");
        break;
      case 'P':
        if (refs.size() != 1 || refs[0] >= static_cast<int>(t))
          throw BridgeError("GOP: P frame needs exactly one earlier reference");
        break;
      case 'B':
        if (refs.empty() || refs[0] >= static_cast<int>(t))
          throw BridgeError("GOP: B frame needs an earlier reference");
        if (refs.size() > 1 && refs[1] <= static_cast<int>(t))
          throw BridgeError("GOP: B frame's second reference must be later");
        break;
      default:
        throw BridgeError("GOP: unknown picture type");
    }
  }
}

CodecBridge::CodecBridge(BridgeConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.gop <= 0) throw ContractError("CodecBridge: gop must be positive");
}

namespace {

std::vector<Yuv420> clip_to_yuv(const clips::VideoClip& clip) {
  const int64_t t = clip.length();
  std::vector<Yuv420> frames;
  frames.reserve(t);
  for (int64_t i = 0; i < t; ++i) {
    core::Tensor<float> frame =
        clip.frames.reshaped({t, 3 * clip.height() * clip.width()});
    core::Tensor<float> one({3, clip.height(), clip.width()});
    std::memcpy(one.data(), frame.data() + i * one.numel(),
                sizeof(float) * static_cast<size_t>(one.numel()));
    frames.push_back(rgb_to_yuv420(one));
  }
  return frames;
}

std::vector<uint8_t> yuv_bytes(const std::vector<Yuv420>& frames) {
  std::vector<uint8_t> out;
  for (const auto& f : frames) {
    out.insert(out.end(), f.y.begin(), f.y.end());
    out.insert(out.end(), f.u.begin(), f.u.end());
    out.insert(out.end(), f.v.begin(), f.v.end());
  }
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& base) {
    const fs::path root = base.empty() ? fs::temp_directory_path() : fs::path(base);
    fs::create_directories(root);
    char tmpl[4096];
    std::snprintf(tmpl, sizeof tmpl, "%s/vidctl-XXXXXX", root.c_str());
    if (!mkdtemp(tmpl)) throw BridgeError("cannot create temp dir under " + root.string());
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::pair<int, int> fps_rational(double fps) {
  // exact for integer rates, close enough elsewhere
  if (fps == static_cast<int>(fps)) return {static_cast<int>(fps), 1};
  return {static_cast<int>(fps * 1000 + 0.5), 1000};
}

}  // namespace

std::vector<uint8_t> CodecBridge::encode(const clips::VideoClip& clip, const QpMap* qp,
                                         double target_bps) const {
  clip.validate();
  if (qp) qp->validate(clip.height(), clip.width());
  const auto [fps_num, fps_den] = fps_rational(clip.fps);
  const std::vector<Yuv420> frames = clip_to_yuv(clip);

  if (cfg_.encoder_path.empty()) {
    EncodeParams p;
    p.width = static_cast<int>(clip.width());
    p.height = static_cast<int>(clip.height());
    p.fps_num = fps_num;
    p.fps_den = fps_den;
    p.gop = cfg_.gop;
    p.preset = cfg_.preset;
    p.base_qp = cfg_.base_qp;
    if (!qp) {
      TempDir tmp(cfg_.temp_dir);
      p.two_pass_abr = true;
      p.bitrate_bps = static_cast<int64_t>(target_bps);
      p.stats_prefix = (tmp.path / "x264stats").string();
      return encode_h264(frames, nullptr, p);
    }
    return encode_h264(frames, qp, p);
  }

  // external encoder process: YUV 4:2:0 planar on stdin, QP sidecar on disk
  TempDir tmp(cfg_.temp_dir);
  const std::string out_path = (tmp.path / "out.h264").string();
  std::vector<std::string> argv{cfg_.encoder_path,
                                "--size",
                                std::to_string(clip.width()) + "x" + std::to_string(clip.height()),
                                "--frames",
                                std::to_string(clip.length()),
                                "--fps",
                                std::to_string(fps_num) + "/" + std::to_string(fps_den),
                                "--gop",
                                std::to_string(cfg_.gop),
                                "--preset",
                                cfg_.preset,
                                "--output",
                                out_path};
  if (qp) {
    const std::string qp_path = (tmp.path / "qp.txt").string();
    qp_sidecar_write(qp_path, *qp);
    argv.insert(argv.end(), {"--qp-file", qp_path, "--base-qp", std::to_string(cfg_.base_qp)});
  } else {
    argv.insert(argv.end(),
                {"--two-pass", "--bitrate", std::to_string(static_cast<int64_t>(target_bps))});
  }
  const util::ProcessResult res = util::run_process(argv, yuv_bytes(frames));
  if (res.exit_code != 0)
    throw BridgeError("encoder process failed (exit " + std::to_string(res.exit_code) +
                      "): " + res.err);
  std::ifstream f(out_path, std::ios::binary);
  if (!f) throw BridgeError("encoder produced no output: " + res.err);
  std::vector<uint8_t> bs((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bs.empty()) throw BridgeError("encoder produced an empty bitstream");
  return bs;
}

CodedClip CodecBridge::decode_and_collect(const clips::VideoClip& clip,
                                          const std::vector<uint8_t>& bs) const {
  DecodedStream dec = decode_h264(bs);
  const int64_t t = clip.length();
  if (static_cast<int64_t>(dec.frames.size()) != t)
    throw BridgeError("decoded frame count mismatch");
  const std::vector<AccessUnit> aus = split_access_units(bs);

  CodedClip out;
  out.frames_hat = core::Tensor<float>({t, 3, clip.height(), clip.width()});
  out.file_sizes.resize(t);
  out.picture_types.resize(t);
  for (int64_t i = 0; i < t; ++i) {
    std::memcpy(out.frames_hat.data() + i * dec.frames[i].numel(), dec.frames[i].data(),
                sizeof(float) * static_cast<size_t>(dec.frames[i].numel()));
    out.picture_types[i] = dec.picture_types[i];
    out.file_sizes[i] = aus.at(static_cast<size_t>(dec.decode_order[i])).size;
  }
  out.total_bitrate = realized_bitrate(out.file_sizes, clip.fps, t, clip.temporal_stride);
  return out;
}

CodedClip CodecBridge::encode_decode(const clips::VideoClip& clip, const QpMap& qp) const {
  return decode_and_collect(clip, encode(clip, &qp, 0));
}

CodedClip CodecBridge::encode_decode_bitstream(const clips::VideoClip& clip, const QpMap& qp,
                                               std::vector<uint8_t>* bitstream) const {
  std::vector<uint8_t> bs = encode(clip, &qp, 0);
  CodedClip out = decode_and_collect(clip, bs);
  if (bitstream) *bitstream = std::move(bs);
  return out;
}

CodedClip CodecBridge::two_pass_abr(const clips::VideoClip& clip, double target_bps) const {
  if (target_bps <= 0) throw ContractError("two_pass_abr: target bitrate must be positive");
  return decode_and_collect(clip, encode(clip, nullptr, target_bps));
}

GopStructure CodecBridge::probe_gop(const clips::VideoClip& clip) const {
  const QpMap probe = QpMap::uniform(clip.length(), clip.height() / kMacroblock,
                                     clip.width() / kMacroblock, cfg_.base_qp);
  CodedClip coded = encode_decode(clip, probe);
  return GopStructure::from_types(coded.picture_types);
}

const GopStructure& CodecBridge::gop_fixture(int64_t t, int64_t h, int64_t w) const {
  std::lock_guard<std::mutex> lock(gop_mutex_);
  const auto key = std::make_tuple(t, h, w);
  auto it = gop_cache_.find(key);
  if (it == gop_cache_.end()) {
    clips::VideoClip probe;
    clips::FrameSequence seq = clips::synthesize_sequence(t, h, w, /*seed=*/411);
    probe.frames = seq.frames;
    probe.fps = seq.fps;
    probe.temporal_stride = 1;
    probe.source_id = "gop-probe";
    it = gop_cache_.emplace(key, probe_gop(probe)).first;
  }
  return it->second;
}

std::vector<int64_t> CodecBridge::per_frame_sizes(const std::vector<uint8_t>& annexb) {
  const std::vector<AccessUnit> aus = split_access_units(annexb);
  const DecodedStream dec = decode_h264(annexb);
  std::vector<int64_t> sizes(dec.frames.size());
  for (size_t i = 0; i < dec.frames.size(); ++i)
    sizes[i] = aus.at(static_cast<size_t>(dec.decode_order[i])).size;
  return sizes;
}

std::string CodecBridge::encoder_version() {
  return std::string("libavcodec-") + av_version_info() + "+libx264";
}

double realized_bitrate(const std::vector<int64_t>& sizes, double fps, int64_t t, int stride) {
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  return 8.0 * static_cast<double>(total) * fps / (static_cast<double>(t) * stride);
}

}  // namespace vidctl::codec
