#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "vidctl/clipstore/clip.hpp"
#include "vidctl/clipstore/video_io.hpp"
#include "vidctl/util/errors.hpp"

using namespace vidctl;
namespace fs = std::filesystem;

namespace {

// Brute-force oracle: number of non-overlapping windows of span
// (len-1)*stride+1 that fit in n frames.
int64_t count_windows(int64_t n, int len, int stride) {
  const int64_t span = static_cast<int64_t>(len - 1) * stride + 1;
  int64_t count = 0, start = 0;
  while (start + span <= n) {
    ++count;
    start += span;
  }
  return count;
}

clips::FrameSequence make_video(int64_t n, int64_t h = 32, int64_t w = 48) {
  return clips::synthesize_sequence(n, h, w, 99);
}

}  // namespace

TEST_CASE("sample_clips: window arithmetic matches brute-force enumeration") {
  clips::SamplerConfig cfg;
  cfg.fixed_stride = 3;
  for (int64_t n : {22, 23, 30, 43, 44, 45, 66, 100}) {
    auto vid = make_video(n);
    auto clips_out = clips::sample_clips(vid, cfg);
    CHECK(static_cast<int64_t>(clips_out.size()) == count_windows(n, 8, 3));
    for (auto& c : clips_out) c.validate();
  }
  // 30 frames at stride 3: span 22, exactly one non-overlapping clip
  CHECK(count_windows(30, 8, 3) == 1);
  auto one = clips::sample_clips(make_video(30), cfg);
  CHECK(one.size() == 1);
  // frame t of the clip is source frame 3t
  auto vid = make_video(30);
  auto clip = clips::sample_clips(vid, cfg)[0];
  for (int t = 0; t < 8; ++t)
    CHECK(clip.frames.at(int64_t(t), int64_t(0), int64_t(5), int64_t(7)) ==
          vid.frames.at(int64_t(3 * t), int64_t(0), int64_t(5), int64_t(7)));
}

TEST_CASE("sample_clips: minimal span and insufficient frames") {
  clips::SamplerConfig cfg;
  cfg.fixed_stride = 3;
  auto exact = clips::sample_clips(make_video(22), cfg);
  CHECK(exact.size() == 1);
  CHECK(exact[0].temporal_stride == 3);
  CHECK_THROWS_AS(clips::sample_clips(make_video(21), cfg), util::InsufficientFramesError);
}

TEST_CASE("sample_clips: fixed policy is deterministic") {
  clips::SamplerConfig cfg;
  auto a = clips::sample_clips(make_video(66), cfg);
  auto b = clips::sample_clips(make_video(66), cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (int64_t k = 0; k < a[i].frames.numel(); ++k)
      REQUIRE(a[i].frames[k] == b[i].frames[k]);
}

TEST_CASE("preprocess: downsample factors and crop geometry") {
  // 2048x1024 at factor 4 -> 512x256 -> 224x224 center crop
  core::Tensor<float> big({1, 3, 1024, 2048});
  for (int64_t i = 0; i < big.numel(); ++i) big[i] = static_cast<float>((i * 37 % 256) / 255.0);
  auto out = clips::preprocess_frames(big, 4, 224, 224, clips::CropPolicy::Center);
  CHECK(out.shape() == core::Shape{1, 3, 224, 224});

  // 960x720 at factor 3 -> 320x240 -> 224x224
  core::Tensor<float> mid = core::Tensor<float>::full({1, 3, 720, 960}, 0.25f);
  auto out2 = clips::preprocess_frames(mid, 3, 224, 224, clips::CropPolicy::Center);
  CHECK(out2.shape() == core::Shape{1, 3, 224, 224});

  // too small after downsampling
  core::Tensor<float> small = core::Tensor<float>::full({1, 3, 128, 128}, 0.5f);
  CHECK_THROWS_AS(clips::preprocess_frames(small, 1, 224, 224, clips::CropPolicy::Center),
                  util::GeometryError);
}

TEST_CASE("preprocess: box average is exact on a constant checkerboard") {
  core::Tensor<float> x({1, 1, 4, 4});
  for (int64_t i = 0; i < 16; ++i) x[i] = (i % 2 == 0) ? 1.0f : 0.0f;
  auto out = clips::preprocess_frames(x, 2, 2, 2, clips::CropPolicy::Center);
  for (int64_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.5f));
}

TEST_CASE("augmentations: forced branches") {
  auto vid = make_video(22);
  clips::SamplerConfig cfg;
  auto clip = clips::sample_clips(vid, cfg)[0];
  core::Rng rng(7);

  SUBCASE("reversal") {
    clips::AugmentConfig ac{0.0, 1.0, 0.0};
    auto aug = clips::augment_for_surrogate(clip, ac, rng);
    for (int t = 0; t < 8; ++t)
      CHECK(aug.frames.at(int64_t(t), int64_t(1), int64_t(3), int64_t(4)) ==
            clip.frames.at(int64_t(7 - t), int64_t(1), int64_t(3), int64_t(4)));
  }
  SUBCASE("grayscale: all channels equal, BT.601 luma") {
    clips::AugmentConfig ac{1.0, 0.0, 0.0};
    auto aug = clips::augment_for_surrogate(clip, ac, rng);
    const float r = clip.frames.at(int64_t(2), int64_t(0), int64_t(5), int64_t(6));
    const float g = clip.frames.at(int64_t(2), int64_t(1), int64_t(5), int64_t(6));
    const float b = clip.frames.at(int64_t(2), int64_t(2), int64_t(5), int64_t(6));
    const float want = 0.299f * r + 0.587f * g + 0.114f * b;
    for (int c = 0; c < 3; ++c)
      CHECK(aug.frames.at(int64_t(2), int64_t(c), int64_t(5), int64_t(6)) ==
            doctest::Approx(want));
  }
  SUBCASE("no-op leaves the clip identical") {
    clips::AugmentConfig ac{0.0, 0.0, 0.0};
    auto aug = clips::augment_for_surrogate(clip, ac, rng);
    for (int64_t i = 0; i < clip.frames.numel(); ++i) REQUIRE(aug.frames[i] == clip.frames[i]);
  }
  SUBCASE("augmentations preserve shape and range") {
    clips::AugmentConfig ac{0.5, 0.5, 0.5};
    for (int rep = 0; rep < 10; ++rep) {
      auto aug = clips::augment_for_surrogate(clip, ac, rng);
      aug.validate();
      CHECK(aug.frames.shape() == clip.frames.shape());
    }
  }
}

TEST_CASE("load_video: png directory round trip, normalization, errors") {
  const fs::path dir = fs::temp_directory_path() / "vidctl_test_frames";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto vid = make_video(3, 32, 48);
  for (int i = 0; i < 3; ++i) {
    core::Tensor<float> frame({3, 32, 48});
    std::memcpy(frame.data(), vid.frames.data() + i * frame.numel(),
                sizeof(float) * frame.numel());
    char name[32];
    std::snprintf(name, sizeof name, "f%04d.png", i);
    clips::write_png((dir / name).string(), frame);
  }
  auto loaded = clips::load_video(dir.string(), 17.0);
  CHECK(loaded.count() == 3);
  CHECK(loaded.frames.shape() == core::Shape{3, 3, 32, 48});
  CHECK(loaded.fps == 17.0);
  // PNG is lossless; only 8-bit quantization separates the two
  double max_err = 0;
  for (int64_t i = 0; i < loaded.frames.numel(); ++i)
    max_err = std::max(max_err, std::abs(double(loaded.frames[i]) - double(vid.frames[i])));
  CHECK(max_err < 1.0 / 255.0 + 1e-6);

  // 8-bit 255 must map to exactly 1.0
  const fs::path wdir = fs::temp_directory_path() / "vidctl_test_white";
  fs::remove_all(wdir);
  fs::create_directories(wdir);
  core::Tensor<float> white = core::Tensor<float>::full({3, 32, 48}, 1.0f);
  clips::write_png((wdir / "white.png").string(), white);
  auto w = clips::load_video(wdir.string(), 17.0);
  CHECK(w.frames[0] == 1.0f);
  fs::remove_all(wdir);

  const fs::path empty = fs::temp_directory_path() / "vidctl_test_empty";
  fs::remove_all(empty);
  fs::create_directories(empty);
  CHECK_THROWS_AS(clips::load_video(empty.string(), 17.0), util::EmptyInputError);
  CHECK_THROWS_AS(clips::load_video("/nonexistent/path.mp4", 17.0), util::IoError);
  fs::remove_all(dir);
  fs::remove_all(empty);
}
