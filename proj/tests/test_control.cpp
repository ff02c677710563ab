#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vidctl/control/model.hpp"
#include "vidctl/fixtures/fixtures.hpp"
#include "vidctl/nn/optim.hpp"
#include "vidctl/util/errors.hpp"

using namespace vidctl;
using core::Shape;
using core::Tensor;
using core::Var;
namespace ops = core::ops;

namespace {
clips::VideoClip small_clip(uint64_t seed = 3) {
  return fixtures::fixture_clips(1, 64, 64, seed)[0];
}
}  // namespace

TEST_CASE("control forward: logit shape, determinism, bandwidth sensitivity") {
  auto net = control::ControlNet(control::ControlConfig::desk_scale(), 5);
  auto clip = small_clip();
  auto logits = net.forward(core::constant(clip.frames), 100e3);
  CHECK(logits->value.shape() == Shape{52, 8, 4, 4});

  auto again = net.forward(core::constant(clip.frames), 100e3);
  for (int64_t i = 0; i < logits->value.numel(); ++i)
    REQUIRE(logits->value[i] == again->value[i]);

  auto other = net.forward(core::constant(clip.frames), 800e3);
  double diff = 0;
  for (int64_t i = 0; i < logits->value.numel(); ++i)
    diff += std::abs(logits->value[i] - other->value[i]);
  CHECK(diff > 0);

  CHECK_THROWS_AS(net.forward(core::constant(clip.frames), 0.0), util::ContractError);
}

TEST_CASE("paper-scale control configuration stays within the parameter budget") {
  auto cfg = control::ControlConfig::paper_scale();
  control::ControlNet net(cfg, 1);
  CHECK(net.params().num_trainable() <= cfg.param_budget);
  CHECK(net.params().num_trainable() > 1'000'000);  // genuinely X3D-S sized
}

TEST_CASE("temperature schedule endpoints and monotonicity") {
  auto cfg = control::ControlConfig::desk_scale();
  const int64_t total = 500;
  CHECK(control::tau_at(cfg, 0, total) == doctest::Approx(2.0));
  CHECK(control::tau_at(cfg, total - 1, total) == doctest::Approx(0.1));
  double prev = 1e9;
  for (int64_t s = 0; s < total; ++s) {
    const double t = control::tau_at(cfg, s, total);
    REQUIRE(t <= prev + 1e-12);
    REQUIRE(t > 0);
    prev = t;
  }
}

TEST_CASE("gumbel softmax: simplex, hard one-hot, straight-through gradient") {
  core::Rng rng(7);
  Tensor<float> logits({52, 2, 2, 2});
  for (int64_t i = 0; i < logits.numel(); ++i)
    logits[i] = static_cast<float>(rng.normal());

  SUBCASE("relaxed sample lies on the simplex") {
    core::Rng r1(11);
    auto y = control::gumbel_softmax(core::make_leaf(logits, true), 1.0, false, r1);
    const int64_t thw = y->value.numel() / 52;
    for (int64_t i = 0; i < thw; ++i) {
      double sum = 0;
      for (int q = 0; q < 52; ++q) sum += y->value[q * thw + i];
      REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("hard sample is exactly one-hot") {
    core::Rng r1(12);
    auto y = control::gumbel_softmax(core::make_leaf(logits, true), 0.7, true, r1);
    const int64_t thw = y->value.numel() / 52;
    for (int64_t i = 0; i < thw; ++i) {
      int ones = 0;
      for (int q = 0; q < 52; ++q) {
        const float v = y->value[q * thw + i];
        REQUIRE((v == 0.0f || v == 1.0f));
        if (v == 1.0f) ++ones;
      }
      REQUIRE(ones == 1);
    }
  }
  SUBCASE("straight-through: hard backward equals relaxed backward") {
    Tensor<float> seed({52, 2, 2, 2});
    for (int64_t i = 0; i < seed.numel(); ++i) seed[i] = static_cast<float>(rng.normal());
    core::Rng r1(13), r2(13);  // identical noise
    auto leaf1 = core::make_leaf(logits.clone(), true);
    auto soft = control::gumbel_softmax(leaf1, 0.9, false, r1);
    core::backward(soft, seed);
    auto leaf2 = core::make_leaf(logits.clone(), true);
    auto hard = control::gumbel_softmax(leaf2, 0.9, true, r2);
    core::backward(hard, seed);
    REQUIRE(leaf1->grad.defined());
    REQUIRE(leaf2->grad.defined());
    for (int64_t i = 0; i < leaf1->grad.numel(); ++i)
      REQUIRE(leaf1->grad[i] == doctest::Approx(leaf2->grad[i]));
  }
  SUBCASE("low temperature concentrates on the dominant logit") {
    Tensor<float> margin = Tensor<float>::zeros({52, 1, 1, 1});
    const int k = 17;
    margin[k] = 10.0f;  // margin >= 10 over every other class
    core::Rng r1(14);
    int hits = 0;
    const int draws = 1000;
    for (int d = 0; d < draws; ++d) {
      auto y = control::gumbel_softmax(core::constant(margin), 0.01, true, r1);
      if (y->value[k] == 1.0f) ++hits;
    }
    CHECK(static_cast<double>(hits) / draws > 0.99);
  }
}

TEST_CASE("infer_qp: deterministic, valid map, no graph construction") {
  auto net = control::ControlNet(control::ControlConfig::desk_scale(), 15);
  auto clip = small_clip(21);
  auto a = net.infer_qp(clip.frames, 200e3);
  auto b = net.infer_qp(clip.frames, 200e3);
  a.validate(64, 64);
  for (int64_t i = 0; i < a.values.numel(); ++i) REQUIRE(a.values[i] == b.values[i]);
}

TEST_CASE("ema_update: fixed point, geometric series, tree mismatch") {
  core::Rng rng(16);
  nn::ParamStore<float> live, shadow;
  auto p1 = live.create("w", Tensor<float>::full({4}, 1.0f));
  auto p2 = shadow.create("w", Tensor<float>::zeros({4}));

  SUBCASE("geometric approach to the live value") {
    // shadow_k = 1 - 0.99^k toward live == 1
    nn::ema_update(live, shadow, 0.99f);
    CHECK(p2->value[0] == doctest::Approx(0.01));
    nn::ema_update(live, shadow, 0.99f);
    CHECK(p2->value[0] == doctest::Approx(0.0199));
    for (int k = 2; k < 25; ++k) nn::ema_update(live, shadow, 0.99f);
    CHECK(p2->value[0] == doctest::Approx(1.0 - std::pow(0.99, 25)));
  }
  SUBCASE("live == shadow is a fixed point") {
    std::memcpy(p2->value.data(), p1->value.data(), sizeof(float) * 4);
    nn::ema_update(live, shadow, 0.99f);
    for (int i = 0; i < 4; ++i) REQUIRE(p2->value[i] == 1.0f);
  }
  SUBCASE("mismatched trees are rejected") {
    nn::ParamStore<float> other;
    other.create("different", Tensor<float>::zeros({4}));
    CHECK_THROWS(nn::ema_update(live, other, 0.99f));
    nn::ParamStore<float> wrong_shape;
    wrong_shape.create("w", Tensor<float>::zeros({5}));
    CHECK_THROWS(nn::ema_update(live, wrong_shape, 0.99f));
  }
}

TEST_CASE("control checkpoint round trip") {
  auto net = control::ControlNet(control::ControlConfig::desk_scale(), 17);
  const std::string path = "/tmp/vidctl_test_control.ckpt";
  control::save_control(path, net);
  auto loaded = control::load_control(path);
  CHECK(loaded->params().num_trainable() == net.params().num_trainable());
  auto clip = small_clip(31);
  auto a = net.infer_qp(clip.frames, 150e3);
  auto b = loaded->infer_qp(clip.frames, 150e3);
  for (int64_t i = 0; i < a.values.numel(); ++i) REQUIRE(a.values[i] == b.values[i]);
}
