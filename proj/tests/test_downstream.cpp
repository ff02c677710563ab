#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "vidctl/clipstore/video_io.hpp"
#include "vidctl/fixtures/fixtures.hpp"
#include "vidctl/vision/downstream.hpp"

using namespace vidctl;
using core::Shape;
using core::Tensor;
namespace ops = core::ops;

namespace {
clips::VideoClip small_clip(uint64_t seed = 9) {
  return fixtures::fixture_clips(1, 64, 64, seed)[0];
}
}  // namespace

TEST_CASE("stand-in prediction shapes and determinism") {
  auto seg = vision::make_seg_standin(8, 1);
  auto flow = vision::make_flow_standin(2);
  auto clip = small_clip();

  auto logits = seg->predict(core::constant(clip.frames));
  CHECK(logits->value.shape() == Shape{8, 8, 64, 64});
  auto flow_pred = flow->predict(core::constant(clip.frames));
  CHECK(flow_pred->value.shape() == Shape{7, 2, 64, 64});

  auto again = seg->predict(core::constant(clip.frames));
  for (int64_t i = 0; i < logits->value.numel(); ++i)
    REQUIRE(logits->value[i] == again->value[i]);
}

TEST_CASE("frozen models: parameters receive no gradients, checksums stable") {
  auto seg = vision::make_seg_standin(8, 3);
  seg->freeze();
  const uint64_t checksum = seg->param_checksum();
  auto clip = small_clip(11);

  auto input = core::make_leaf(clip.frames.clone(), true);
  auto pred = seg->predict(input);
  core::backward(ops::mean_all(pred));
  // gradient reaches the pixels but no parameter buffer exists
  REQUIRE(input->grad.defined());
  double g = 0;
  for (int64_t i = 0; i < input->grad.numel(); ++i) g += std::abs(input->grad[i]);
  CHECK(g > 0);
  for (const auto& [name, v] : seg->params().entries()) REQUIRE_FALSE(v->grad.defined());
  CHECK(seg->param_checksum() == checksum);
}

TEST_CASE("pseudo-label path produces no graph under no-grad") {
  auto seg = vision::make_seg_standin(8, 4);
  seg->freeze();
  auto clip = small_clip(12);
  core::NoGradGuard ng;
  auto pred = seg->predict(core::make_leaf(clip.frames.clone(), true));
  CHECK_FALSE(pred->requires_grad);
  CHECK(pred->parents.empty());
}

TEST_CASE("task metrics: identity, half flip, flow outlier convention") {
  core::Rng rng(5);

  SUBCASE("segmentation accuracy") {
    Tensor<float> p({1, 3, 2, 2});
    for (int64_t i = 0; i < p.numel(); ++i) p[i] = static_cast<float>(rng.normal());
    CHECK(vision::task_metric(p, p, vision::Task::Segmentation) == doctest::Approx(100.0));

    // flip the argmax of exactly half the pixels
    Tensor<float> q = p.clone();
    for (int64_t px = 0; px < 2; ++px) {
      // find argmax and suppress it
      int best = 0;
      for (int c = 1; c < 3; ++c)
        if (q.at(int64_t(0), int64_t(c), int64_t(0), px) >
            q.at(int64_t(0), int64_t(best), int64_t(0), px))
          best = c;
      q.at(int64_t(0), int64_t(best), int64_t(0), px) -= 100.0f;
    }
    CHECK(vision::task_metric(q, p, vision::Task::Segmentation) == doctest::Approx(50.0));
  }

  SUBCASE("flow F1-all and the or/and convention") {
    Tensor<float> label({1, 2, 1, 1});
    label[0] = 100.0f;  // magnitude 100
    label[1] = 0.0f;
    Tensor<float> pred = label.clone();
    pred[0] += 4.0f;  // EPE 4 > 3 px, but 4% < 5% of the label magnitude

    CHECK(vision::task_metric(pred, label, vision::Task::Flow) == doctest::Approx(100.0));
    vision::MetricOptions conjunction;
    conjunction.outlier_disjunction = false;
    CHECK(vision::task_metric(pred, label, vision::Task::Flow, conjunction) ==
          doctest::Approx(0.0));

    CHECK(vision::task_metric(label, label, vision::Task::Flow) == doctest::Approx(0.0));
  }
}

TEST_CASE("trained stand-ins beat their untrained versions on the synthetic tasks") {
  // quick sanity that fixture training actually learns something
  auto trained = fixtures::train_seg_standin(8, 21, 400);
  auto untrained = vision::make_seg_standin(8, 22);
  auto seq = clips::synthesize_sequence(2, 32, 32, 77);

  // luma-bucket targets as in the fixture trainer
  auto luma_class = [&](int64_t t, int64_t i, int64_t j) {
    double acc = 0;
    int n = 0;
    for (int64_t di = -1; di <= 1; ++di)
      for (int64_t dj = -1; dj <= 1; ++dj) {
        const int64_t y = i + di, x = j + dj;
        if (y < 0 || y >= 32 || x < 0 || x >= 32) continue;
        acc += 0.299 * seq.frames.at(t, int64_t(0), y, x) +
               0.587 * seq.frames.at(t, int64_t(1), y, x) +
               0.114 * seq.frames.at(t, int64_t(2), y, x);
        ++n;
      }
    return std::clamp(static_cast<int>(acc / n * 8), 0, 7);
  };
  auto accuracy = [&](vision::DownstreamModel& m) {
    core::NoGradGuard ng;
    auto logits = m.predict(core::constant(seq.frames))->value;
    int64_t ok = 0;
    for (int64_t t = 0; t < 2; ++t)
      for (int64_t i = 0; i < 32; ++i)
        for (int64_t j = 0; j < 32; ++j) {
          int best = 0;
          for (int c = 1; c < 8; ++c)
            if (logits.at(t, int64_t(c), i, j) > logits.at(t, int64_t(best), i, j)) best = c;
          if (best == luma_class(t, i, j)) ++ok;
        }
    return static_cast<double>(ok) / (2 * 32 * 32);
  };
  CHECK(accuracy(*trained) > accuracy(*untrained) + 0.2);
  CHECK(accuracy(*trained) > 0.5);
}

TEST_CASE("downstream checkpoint round trip with adapter descriptor") {
  auto seg = fixtures::train_seg_standin(8, 31, 40);
  const std::string path = "/tmp/vidctl_test_downstream.ckpt";
  vision::save_downstream(path, *seg, "standin-seg:8");
  auto loaded = vision::load_downstream(path, "standin-seg:8");
  CHECK(loaded->frozen());
  CHECK(loaded->param_checksum() == seg->param_checksum());
  CHECK(loaded->num_classes() == 8);
  CHECK_THROWS(vision::load_downstream(path, "bogus-adapter"));
}
