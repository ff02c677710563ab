// Standalone H.264 encoder shim: raw planar YUV 4:2:0 on stdin, macroblock
// QP sidecar on disk, Annex-B elementary stream out. The codec bridge spawns
// this binary by default; any patched encoder honoring the same contract can
// be dropped in via --encoder-path on the bridge side.

#include <unistd.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <vector>

#include "vidctl/codec/encode.hpp"
#include "vidctl/codec/qp_map.hpp"

using namespace vidctl;

namespace {

bool parse_size(const std::string& s, int* w, int* h) {
  return std::sscanf(s.c_str(), "%dx%d", w, h) == 2;
}

bool parse_fps(const std::string& s, int* num, int* den) {
  if (std::sscanf(s.c_str(), "%d/%d", num, den) == 2) return true;
  if (std::sscanf(s.c_str(), "%d", num) == 1) {
    *den = 1;
    return true;
  }
  return false;
}

std::vector<codec::Yuv420> read_yuv_stdin(int w, int h, int frames) {
  std::vector<codec::Yuv420> out;
  const size_t ysz = static_cast<size_t>(w) * h;
  const size_t csz = ysz / 4;
  for (int t = 0; t < frames; ++t) {
    codec::Yuv420 f;
    f.width = w;
    f.height = h;
    f.y.resize(ysz);
    f.u.resize(csz);
    f.v.resize(csz);
    for (auto* plane : {&f.y, &f.u, &f.v}) {
      size_t got = 0;
      while (got < plane->size()) {
        const ssize_t n = read(STDIN_FILENO, plane->data() + got, plane->size() - got);
        if (n <= 0) throw std::runtime_error("short read on stdin (frame " + std::to_string(t) + ")");
        got += static_cast<size_t>(n);
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"H.264 encoder with per-macroblock QP sidecar support"};
  std::string size_str, fps_str = "17", preset = "medium", qp_file, output;
  int frames = 8, gop = 8, base_qp = 26;
  bool two_pass = false;
  int64_t bitrate = 0;
  app.add_option("--size", size_str, "frame size WxH")->required();
  app.add_option("--frames", frames, "frame count")->required();
  app.add_option("--fps", fps_str, "frame rate (N or N/D)");
  app.add_option("--gop", gop, "GOP size");
  app.add_option("--preset", preset, "x264 preset");
  app.add_option("--qp-file", qp_file, "macroblock QP sidecar (one integer per line)");
  app.add_option("--base-qp", base_qp, "base QP anchoring the per-MB offsets");
  app.add_flag("--two-pass", two_pass, "2-pass average bitrate mode");
  app.add_option("--bitrate", bitrate, "target bitrate (bit/s) for --two-pass");
  app.add_option("--output", output, "output Annex-B file")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    codec::EncodeParams p;
    if (!parse_size(size_str, &p.width, &p.height)) throw std::runtime_error("bad --size");
    if (!parse_fps(fps_str, &p.fps_num, &p.fps_den)) throw std::runtime_error("bad --fps");
    p.gop = gop;
    p.preset = preset;
    p.base_qp = base_qp;
    p.two_pass_abr = two_pass;
    p.bitrate_bps = bitrate;
    if (two_pass) p.stats_prefix = output + ".stats";

    const std::vector<codec::Yuv420> yuv = read_yuv_stdin(p.width, p.height, frames);
    codec::QpMap qp;
    const bool use_qp = !qp_file.empty() && !two_pass;
    if (use_qp)
      qp = codec::qp_sidecar_read(qp_file, frames, p.height / codec::kMacroblock,
                                  p.width / codec::kMacroblock);
    const std::vector<uint8_t> bs =
        codec::encode_h264(yuv, use_qp ? &qp : nullptr, p, nullptr);

    std::ofstream f(output, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + output);
    f.write(reinterpret_cast<const char*>(bs.data()), static_cast<std::streamsize>(bs.size()));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "x264-shim: " << e.what() << "\n";
    return 1;
  }
}
