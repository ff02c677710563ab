#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vidctl/fixtures/fixtures.hpp"
#include "vidctl/train/loop.hpp"

using namespace vidctl;
using core::Tensor;
using core::Var;
namespace ops = core::ops;

namespace {

// Asymptotic Kolmogorov-Smirnov p-value for a one-sample test against U(0,1).
double ks_uniform_pvalue(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const double cdf = samples[i];
    d = std::max(d, std::abs((i + 1) / n - cdf));
    d = std::max(d, std::abs(cdf - i / n));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace

TEST_CASE("bandwidth conversion: closed form, linearity, zero input") {
  // f_i = 1000 bytes, T=8, fps=17, stride=3 -> 8*8000*17/24
  Tensor<double> log_sizes = Tensor<double>::full({8}, std::log10(1000.0));
  auto b = train::bandwidth_from_log_sizes<double>(core::make_leaf(log_sizes, true), 17.0, 3);
  CHECK(b->value[0] == doctest::Approx(8.0 * 8000.0 * 17.0 / 24.0).epsilon(1e-9));
  CHECK(b->value[0] == doctest::Approx(45333.333333).epsilon(1e-6));

  // doubling every size doubles the bandwidth
  Tensor<double> doubled = Tensor<double>::full({8}, std::log10(2000.0));
  auto b2 = train::bandwidth_from_log_sizes<double>(core::make_leaf(doubled), 17.0, 3);
  CHECK(b2->value[0] == doctest::Approx(2.0 * b->value[0]).epsilon(1e-9));

  // zero bytes give zero bandwidth on the plain-number path
  CHECK(train::bandwidth_from_bytes(std::vector<int64_t>(8, 0), 17.0, 3) == 0.0);

  Tensor<double> bad = Tensor<double>::full({8}, std::nan(""));
  CHECK_THROWS_AS(train::bandwidth_from_log_sizes<double>(core::make_leaf(bad), 17.0, 3),
                  util::ContractError);
}

TEST_CASE("bandwidth loss: exact values and gradient gating") {
  auto eval_lb = [](double bt, double b, double eps) {
    auto v = core::make_leaf(Tensor<double>::scalar(bt), true);
    auto l = train::bandwidth_loss(v, b, eps);
    core::backward(l);
    return std::make_pair(l->value[0], v->grad.defined() ? v->grad[0] : 0.0);
  };
  auto [l1, g1] = eval_lb(98000, 100000, 0.02);
  CHECK(l1 == doctest::Approx(0.0));
  CHECK(g1 == doctest::Approx(0.0));
  auto [l2, g2] = eval_lb(100000, 100000, 0.02);
  CHECK(l2 == doctest::Approx(2000.0).epsilon(1e-12));
  CHECK(g2 == doctest::Approx(1.0));
  auto [l3, g3] = eval_lb(90000, 100000, 0.02);
  CHECK(l3 == doctest::Approx(0.0));
  CHECK(g3 == doctest::Approx(0.0));
}

TEST_CASE("bandwidth regularizer: exact values including the boundary") {
  auto eval_lr = [](double bt, double b, double eps) {
    auto v = core::make_leaf(Tensor<double>::scalar(bt), true);
    return train::bandwidth_regularizer(v, b, eps)->value[0];
  };
  CHECK(eval_lr(90000, 100000, 0.05) == doctest::Approx(5000.0));
  CHECK(eval_lr(96000, 100000, 0.05) == doctest::Approx(0.0));
  CHECK(eval_lr(95000, 100000, 0.05) == doctest::Approx(0.0));  // boundary inclusive
}

TEST_CASE("control loss: weighted sum and contract") {
  train::ControlLossWeights w;
  auto mk = [](double v) { return core::make_leaf(Tensor<double>::scalar(v), true); };
  train::ControlLossReport rep;
  auto total = train::control_loss(mk(2000.0), mk(0.5), mk(0.0), w, &rep);
  CHECK(total->value[0] == doctest::Approx(12001.0).epsilon(1e-12));
  CHECK(rep.l_b == 2000.0);

  auto zero = train::control_loss(mk(0.0), mk(0.0), mk(0.0), w);
  CHECK(zero->value[0] == doctest::Approx(0.0));

  CHECK_THROWS_AS(train::control_loss(mk(-1.0), mk(0.0), mk(0.0), w), util::ContractError);

  train::ControlLossWeights bad;
  bad.eps_r = 0.01;  // violates eps_b < eps_r
  CHECK_THROWS_AS(bad.validate(), util::ContractError);
}

TEST_CASE("heaviside gate convention H(0) = 1") {
  CHECK(train::heaviside_gate(100000, 100000 / 1.02, 0.02) == 1.0);  // exactly at boundary
  CHECK(train::heaviside_gate(100000, 120000, 0.02) == 0.0);
  CHECK(train::heaviside_gate(100000, 50000, 0.02) == 1.0);
}

TEST_CASE("performance loss: gating, perfect distillation, flow arithmetic") {
  core::Rng rng(5);
  Tensor<float> pseudo({2, 2, 4, 4});
  for (int64_t i = 0; i < pseudo.numel(); ++i)
    pseudo[i] = static_cast<float>(rng.normal() * 10);

  SUBCASE("gate off zeroes the loss regardless of the prediction") {
    Tensor<float> pred({2, 2, 4, 4});
    pred.fill(123.0f);
    auto l = train::performance_loss(core::make_leaf(pred, true), pseudo, 0.0,
                                     vision::Task::Flow);
    CHECK(l->value[0] == 0.0f);
  }
  SUBCASE("perfect prediction gives zero flow loss") {
    auto l = train::performance_loss(core::make_leaf(pseudo.clone(), true), pseudo, 1.0,
                                     vision::Task::Flow);
    CHECK(l->value[0] == doctest::Approx(0.0));
  }
  SUBCASE("constant 1px offset in both components averages to 1") {
    Tensor<float> pred = pseudo.clone();
    for (int64_t i = 0; i < pred.numel(); ++i) pred[i] += 1.0f;
    auto l = train::performance_loss(core::make_leaf(pred, true), pseudo, 1.0,
                                     vision::Task::Flow);
    CHECK(l->value[0] == doctest::Approx(1.0));
  }
  SUBCASE("segmentation KL vanishes for identical logits") {
    Tensor<float> logits({2, 5, 4, 4});
    for (int64_t i = 0; i < logits.numel(); ++i)
      logits[i] = static_cast<float>(rng.normal());
    auto l = train::performance_loss(core::make_leaf(logits.clone(), true), logits, 1.0,
                                     vision::Task::Segmentation);
    CHECK(l->value[0] == doctest::Approx(0.0).epsilon(1e-5));
    // and increases for perturbed predictions
    Tensor<float> perturbed = logits.clone();
    for (int64_t i = 0; i < perturbed.numel(); ++i)
      perturbed[i] += static_cast<float>(rng.normal());
    auto l2 = train::performance_loss(core::make_leaf(perturbed, true), logits, 1.0,
                                      vision::Task::Segmentation);
    CHECK(l2->value[0] > 1e-4);
  }
}

TEST_CASE("bandwidth sampler: range, geometric-mean median, log-uniformity") {
  train::BandwidthSampler sampler;
  core::Rng rng(7);
  const int n = 10000;
  std::vector<double> samples, unit;
  for (int i = 0; i < n; ++i) {
    const double b = sampler.sample(rng);
    REQUIRE(b >= 30000.0);
    REQUIRE(b <= 900000.0);
    samples.push_back(b);
    unit.push_back((std::log10(b) - std::log10(30000.0)) /
                   (std::log10(900000.0) - std::log10(30000.0)));
  }
  std::nth_element(samples.begin(), samples.begin() + n / 2, samples.end());
  const double median = samples[n / 2];
  const double geo_mean = std::sqrt(30000.0 * 900000.0);
  CHECK(std::abs(median - geo_mean) / geo_mean < 0.05);
  CHECK(ks_uniform_pvalue(unit) > 0.01);
}

TEST_CASE("alternating steps: isolation and parameter ownership") {
  // smallest functional assembly: tiny nets, tiny clips
  auto scfg = surrogate::SurrogateConfig::tiny();
  scfg.a_ff = 2.0;  // keep the fft path cheap but exercised
  surrogate::SurrogateNet<float> surrogate_net(scfg, 41);
  control::ControlNet net(control::ControlConfig::desk_scale(), 42);
  control::ControlNet ema(control::ControlConfig::desk_scale(), 43);
  auto downstream = fixtures::train_seg_standin(4, 44, /*steps=*/30);
  codec::CodecBridge bridge{codec::BridgeConfig{}};
  auto dataset = fixtures::fixture_clips(2, 32, 32, 45);

  train::TrainControlConfig tcfg;
  tcfg.steps = 4;
  tcfg.batch_size = 1;
  tcfg.seed = 46;
  train::Trainer trainer(net, ema, surrogate_net, bridge, *downstream, dataset, tcfg);

  // snapshot control params to verify the surrogate step leaves them alone
  std::vector<Tensor<float>> control_before;
  for (auto& [name, v] : net.params().entries()) control_before.push_back(v->value.clone());

  auto metrics = trainer.train_step_control(0);
  CHECK(std::isfinite(metrics.loss));
  CHECK(metrics.b >= 30000.0);
  CHECK(metrics.tau == doctest::Approx(2.0));

  // surrogate parameters collected no gradients during the control step
  for (auto& [name, v] : surrogate_net.params().entries())
    REQUIRE_FALSE(v->grad.defined());
  // at least one control parameter moved
  bool control_moved = false;
  size_t idx = 0;
  for (auto& [name, v] : net.params().entries()) {
    for (int64_t i = 0; i < v->value.numel() && !control_moved; ++i)
      if (v->value[i] != control_before[idx][i]) control_moved = true;
    ++idx;
  }
  CHECK(control_moved);

  // EMA moved toward the live weights but is not equal to them
  bool ema_nontrivial = false;
  for (size_t e = 0; e < net.params().entries().size() && !ema_nontrivial; ++e) {
    const auto& lv = net.params().entries()[e].second->value;
    const auto& ev = ema.params().entries()[e].second->value;
    for (int64_t i = 0; i < lv.numel(); ++i)
      if (ev[i] != lv[i]) {
        ema_nontrivial = true;
        break;
      }
  }
  CHECK(ema_nontrivial);

  // surrogate step: control untouched, surrogate moves
  std::vector<Tensor<float>> control_snap;
  for (auto& [name, v] : net.params().entries()) control_snap.push_back(v->value.clone());
  std::vector<Tensor<float>> surrogate_before;
  for (auto& [name, v] : surrogate_net.params().entries())
    surrogate_before.push_back(v->value.clone());

  const double sloss = trainer.train_step_surrogate(0);
  CHECK(std::isfinite(sloss));
  idx = 0;
  for (auto& [name, v] : net.params().entries()) {
    for (int64_t i = 0; i < v->value.numel(); ++i)
      REQUIRE(v->value[i] == control_snap[idx][i]);
    ++idx;
  }
  bool surrogate_moved = false;
  idx = 0;
  for (auto& [name, v] : surrogate_net.params().entries()) {
    for (int64_t i = 0; i < v->value.numel() && !surrogate_moved; ++i)
      if (v->value[i] != surrogate_before[idx][i]) surrogate_moved = true;
    ++idx;
  }
  CHECK(surrogate_moved);

  // downstream model never changes
  const uint64_t checksum_before = downstream->param_checksum();
  trainer.train_step_control(1);
  trainer.train_step_surrogate(1);
  CHECK(downstream->param_checksum() == checksum_before);
}

TEST_CASE("gate consistency: active performance loss implies near-feasible bandwidth") {
  // whenever L_p > 0 the gate fired, i.e. b_tilde <= b (1 + eps_p); encoded
  // directly in the gate definition, checked on a grid
  for (double b : {50e3, 200e3, 800e3})
    for (double bt : {40e3, 100e3, 300e3, 900e3}) {
      const double gate = train::heaviside_gate(b, bt, 0.02);
      if (gate > 0) CHECK(bt <= b * (1.0 + 0.02) + 1e-9);
    }
}
