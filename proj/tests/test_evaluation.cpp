#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "vidctl/eval/evaluate.hpp"
#include "vidctl/fixtures/fixtures.hpp"
#include "vidctl/util/table.hpp"

using namespace vidctl;

namespace {

eval::EvalRecord rec(double condition, double realized, double metric, bool failed = false) {
  eval::EvalRecord r;
  r.clip_id = "c";
  r.condition = condition;
  r.realized = realized;
  r.metric = metric;
  r.failed = failed;
  return r;
}

}  // namespace

TEST_CASE("acc_bw thresholds: inclusive boundary and tolerance ladder") {
  // 101 kbit/s against a 100 kbit/s condition: miss at 0%, hit at 2%
  std::vector<eval::EvalRecord> rs{rec(100000, 101000, 50)};
  CHECK(eval::acc_bw(rs, 0.0) == doctest::Approx(0.0));
  CHECK(eval::acc_bw(rs, 0.02) == doctest::Approx(100.0));

  // equality counts as meeting the condition at every tolerance
  std::vector<eval::EvalRecord> eq{rec(100000, 100000, 50), rec(50000, 50000, 50)};
  for (double tol : {0.0, 0.02, 0.05}) CHECK(eval::acc_bw(eq, tol) == doctest::Approx(100.0));

  // 106 kbit/s misses 0/2/5%
  std::vector<eval::EvalRecord> over{rec(100000, 106000, 50)};
  for (double tol : {0.0, 0.02, 0.05}) CHECK(eval::acc_bw(over, tol) == doctest::Approx(0.0));

  CHECK_THROWS_AS(eval::acc_bw({}, 0.0), util::ContractError);
}

TEST_CASE("metric_with_drops substitutes the worst case for dropped clips") {
  std::vector<eval::EvalRecord> rs{rec(100000, 150000, 80), rec(100000, 90000, 90)};
  // segmentation: dropped contributes 0 -> mean(0, 90) = 45
  CHECK(eval::metric_with_drops(rs, 0.0, vision::Task::Segmentation) == doctest::Approx(45.0));
  // flow: dropped contributes 100 -> mean(100, 10) = 55
  std::vector<eval::EvalRecord> fl{rec(100000, 150000, 30), rec(100000, 90000, 10)};
  CHECK(eval::metric_with_drops(fl, 0.0, vision::Task::Flow) == doctest::Approx(55.0));
  // no drops: plain mean
  std::vector<eval::EvalRecord> ok{rec(100000, 90000, 80), rec(100000, 90000, 90)};
  CHECK(eval::metric_with_drops(ok, 0.0, vision::Task::Segmentation) == doctest::Approx(85.0));
  // failed encode counts as dropped at every tolerance
  std::vector<eval::EvalRecord> failed{rec(100000, 0, 0, true)};
  for (double tol : {0.0, 0.02, 0.05})
    CHECK(eval::metric_with_drops(failed, tol, vision::Task::Segmentation) ==
          doctest::Approx(0.0));
}

TEST_CASE("acc_bw is monotone non-decreasing in the tolerance") {
  core::Rng rng(3);
  std::vector<eval::EvalRecord> rs;
  for (int i = 0; i < 50; ++i)
    rs.push_back(rec(100000, rng.uniform(50000, 150000), rng.uniform(0, 100)));
  double prev = -1;
  for (double tol : {0.0, 0.01, 0.02, 0.05, 0.1, 0.5}) {
    const double a = eval::acc_bw(rs, tol);
    CHECK(a >= prev);
    prev = a;
  }
}

TEST_CASE("aggregation is permutation invariant") {
  core::Rng rng(4);
  std::vector<eval::EvalRecord> rs;
  for (int i = 0; i < 30; ++i)
    rs.push_back(rec(100000, rng.uniform(50000, 150000), rng.uniform(0, 100)));
  auto shuffled = rs;
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);
  for (double tol : {0.0, 0.02, 0.05}) {
    CHECK(eval::acc_bw(rs, tol) == doctest::Approx(eval::acc_bw(shuffled, tol)));
    CHECK(eval::metric_with_drops(rs, tol, vision::Task::Flow) ==
          doctest::Approx(eval::metric_with_drops(shuffled, tol, vision::Task::Flow)));
  }
}

TEST_CASE("protocol: ten log-spaced conditions over the working range") {
  eval::EvalProtocol p;
  auto conditions = p.condition_values();
  REQUIRE(conditions.size() == 10);
  CHECK(conditions.front() == doctest::Approx(30e3));
  CHECK(conditions.back() == doctest::Approx(900e3));
  // equal spacing in log10
  const double step = std::log10(conditions[1]) - std::log10(conditions[0]);
  for (size_t i = 1; i < conditions.size(); ++i)
    CHECK(std::log10(conditions[i]) - std::log10(conditions[i - 1]) ==
          doctest::Approx(step).epsilon(1e-9));
}

TEST_CASE("evaluate_policy: full grid shape, failure handling, report files") {
  auto dataset = fixtures::fixture_clips(2, 64, 64, 51);
  auto downstream = fixtures::train_seg_standin(8, 52, 60);
  codec::CodecBridge bridge{codec::BridgeConfig{}};
  eval::EvalProtocol protocol;
  protocol.num_conditions = 4;  // keep the unit test quick

  int calls = 0;
  auto policy = [&](const clips::VideoClip& clip, double b) {
    ++calls;
    if (clip.source_id == "fixture-1" && b < 50e3)
      throw util::BridgeError("injected failure");
    return codec::QpMap::uniform(clip.length(), clip.height() / 16, clip.width() / 16, 30);
  };
  auto report =
      eval::evaluate_policy("test", policy, dataset, protocol, bridge, *downstream, false);
  CHECK(report.records.size() == 8);  // 2 clips x 4 conditions
  int failures = 0;
  for (const auto& r : report.records) {
    if (r.failed) ++failures;
    if (!r.failed) {
      CHECK(r.realized > 0);
      CHECK(r.metric >= 0);
      CHECK(r.metric <= 100);
    }
  }
  CHECK(failures == 1);

  const std::string prefix = "/tmp/vidctl_test_report";
  eval::write_report_files(report, prefix);
  auto summary = util::read_table(prefix + "_summary.csv");
  REQUIRE(summary.rows.size() == 5);  // 4 conditions + overall
  CHECK(summary.columns.size() == 1 + 3 + 3);
  auto records = util::read_table(prefix + "_records.csv");
  CHECK(records.rows.size() == 8);
  auto curve = util::read_table(prefix + "_accbw_curve.csv");
  CHECK(curve.rows.size() == 4);
}

TEST_CASE("bisection baseline: feasible QP choice under the realized-rate curve") {
  auto clip = fixtures::fixture_clips(1, 64, 64, 61)[0];
  codec::CodecBridge bridge{codec::BridgeConfig{}};

  // pick a mid-range target both reachable and nontrivial
  const auto lo = bridge.encode_decode(clip, codec::QpMap::uniform(8, 4, 4, 51)).total_bitrate;
  const auto hi = bridge.encode_decode(clip, codec::QpMap::uniform(8, 4, 4, 0)).total_bitrate;
  const double target = std::sqrt(lo * hi);

  auto qp = eval::bisect_uniform_qp(clip, target, bridge);
  const int chosen = qp.values[0];
  const double realized = bridge.encode_decode(clip, qp).total_bitrate;
  CHECK(realized <= target);
  if (chosen > 0) {
    // one step finer would overshoot: the chosen QP is the boundary
    auto finer = codec::QpMap::uniform(8, 4, 4, chosen - 1);
    CHECK(bridge.encode_decode(clip, finer).total_bitrate > target);
  }
}

TEST_CASE("uniform QP sweep: positive bitrates, decreasing trend, ssim trend") {
  auto dataset = fixtures::fixture_clips(1, 64, 64, 71);
  auto downstream = fixtures::train_seg_standin(8, 72, 60);
  codec::CodecBridge bridge{codec::BridgeConfig{}};
  auto curve = eval::sweep_uniform_qp(dataset, bridge, *downstream, {0, 10, 20, 30, 40, 51});
  REQUIRE(curve.size() == 6);
  for (size_t i = 0; i < curve.size(); ++i) {
    CHECK(curve[i].bitrate > 0);
    if (i > 0) {
      CHECK(curve[i].bitrate <= curve[i - 1].bitrate);
      CHECK(curve[i].ssim <= curve[i - 1].ssim + 1e-6);
    }
  }
  // metric degrades along the sweep with at most one inversion
  int inversions = 0;
  for (size_t i = 1; i < curve.size(); ++i)
    if (curve[i].metric > curve[i - 1].metric + 1e-9) ++inversions;
  CHECK(inversions <= 1);
}

TEST_CASE("validate_surrogate on a perfect stub returns the oracle identity") {
  auto dataset = fixtures::fixture_clips(1, 32, 32, 81);
  codec::CodecBridge bridge{codec::BridgeConfig{}};

  auto table = eval::validate_surrogate_fn(
      [&](const clips::VideoClip& clip, const codec::QpMap& qp) {
        const auto coded = bridge.encode_decode(clip, qp);
        std::vector<double> logs;
        for (int64_t s : coded.file_sizes) logs.push_back(std::log10(double(s)));
        return std::make_pair(coded.frames_hat, logs);
      },
      dataset, bridge, /*qp_step=*/17);
  CHECK(table.mean_ssim == doctest::Approx(1.0));
  CHECK(table.mean_l1 == doctest::Approx(0.0));
  CHECK(table.mean_rel_err_pct == doctest::Approx(0.0).epsilon(1e-6));
  REQUIRE(table.rows.size() == 4);  // QP 0, 17, 34, 51
}
