#include "vidctl/eval/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "vidctl/core/parallel.hpp"
#include "vidctl/nn/image_metrics.hpp"
#include "vidctl/surrogate/qp_onehot.hpp"
#include "vidctl/util/errors.hpp"
#include "vidctl/util/table.hpp"

namespace vidctl::eval {

using util::ContractError;

std::vector<double> EvalProtocol::condition_values() const {
  validate();
  std::vector<double> out;
  const double lo = std::log10(bw_lo), hi = std::log10(bw_hi);
  for (int i = 0; i < num_conditions; ++i) {
    const double t = num_conditions == 1 ? 0.0 : static_cast<double>(i) / (num_conditions - 1);
    out.push_back(std::pow(10.0, lo + t * (hi - lo)));
  }
  return out;
}

void EvalProtocol::validate() const {
  if (num_conditions < 1) throw ContractError("EvalProtocol: need at least one condition");
  if (!(bw_lo > 0 && bw_hi > bw_lo)) throw ContractError("EvalProtocol: bad bandwidth range");
  for (double t : tolerances)
    if (t < 0) throw ContractError("EvalProtocol: tolerances must be nonnegative");
}

double acc_bw(const std::vector<EvalRecord>& records, double tolerance) {
  if (records.empty()) throw ContractError("acc_bw: empty record set");
  int64_t hit = 0;
  for (const auto& r : records)
    if (!dropped(r, tolerance)) ++hit;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(records.size());
}

double metric_with_drops(const std::vector<EvalRecord>& records, double tolerance,
                         vision::Task task) {
  if (records.empty()) throw ContractError("metric_with_drops: empty record set");
  const double drop_value = task == vision::Task::Segmentation ? 0.0 : 100.0;
  double acc = 0;
  for (const auto& r : records) acc += dropped(r, tolerance) ? drop_value : r.metric;
  return acc / static_cast<double>(records.size());
}

std::vector<EvalRecord> Report::for_condition(double b) const {
  std::vector<EvalRecord> out;
  for (const auto& r : records)
    if (r.condition == b) out.push_back(r);
  return out;
}

Report evaluate_policy(const std::string& method, const QpPolicy& policy,
                       const std::vector<clips::VideoClip>& dataset, const EvalProtocol& protocol,
                       const codec::CodecBridge& bridge, vision::DownstreamModel& downstream,
                       bool parallel) {
  protocol.validate();
  if (dataset.empty()) throw ContractError("evaluate: empty dataset");
  const std::vector<double> conditions = protocol.condition_values();

  Report report;
  report.protocol = protocol;
  report.task = downstream.task();
  report.method = method;
  const int64_t total = static_cast<int64_t>(dataset.size() * conditions.size());
  report.records.resize(total);

  // pseudo labels once per clip
  std::vector<core::Tensor<float>> pseudo(dataset.size());
  {
    core::NoGradGuard ng;
    for (size_t i = 0; i < dataset.size(); ++i)
      pseudo[i] = downstream.predict(core::constant(dataset[i].frames))->value;
  }

#pragma omp parallel for schedule(dynamic) num_threads(core::num_threads()) if (parallel)
  for (int64_t idx = 0; idx < total; ++idx) {
    const int64_t ci = idx / static_cast<int64_t>(conditions.size());
    const int64_t bi = idx % static_cast<int64_t>(conditions.size());
    const clips::VideoClip& clip = dataset[ci];
    const double b = conditions[bi];
    EvalRecord rec;
    rec.clip_id = clip.source_id;
    rec.condition = b;
    try {
      const codec::QpMap qp = policy(clip, b);
      const codec::CodedClip coded = bridge.encode_decode(clip, qp);
      rec.realized = coded.total_bitrate;
      core::NoGradGuard ng;
      const auto pred = downstream.predict(core::constant(coded.frames_hat))->value;
      rec.metric = vision::task_metric(pred, pseudo[ci], downstream.task());
    } catch (const std::exception&) {
      rec.failed = true;
    }
    report.records[idx] = rec;
  }
  return report;
}

Report evaluate_control(const control::ControlNet& net,
                        const std::vector<clips::VideoClip>& dataset,
                        const EvalProtocol& protocol, const codec::CodecBridge& bridge,
                        vision::DownstreamModel& downstream) {
  return evaluate_policy(
      "control",
      [&](const clips::VideoClip& clip, double b) { return net.infer_qp(clip.frames, b); },
      dataset, protocol, bridge, downstream);
}

Report evaluate_baseline_abr(const std::vector<clips::VideoClip>& dataset,
                             const EvalProtocol& protocol, const codec::CodecBridge& bridge,
                             vision::DownstreamModel& downstream) {
  protocol.validate();
  if (dataset.empty()) throw ContractError("evaluate: empty dataset");
  const std::vector<double> conditions = protocol.condition_values();
  Report report;
  report.protocol = protocol;
  report.task = downstream.task();
  report.method = "2pass-abr";
  const int64_t total = static_cast<int64_t>(dataset.size() * conditions.size());
  report.records.resize(total);
  std::vector<core::Tensor<float>> pseudo(dataset.size());
  {
    core::NoGradGuard ng;
    for (size_t i = 0; i < dataset.size(); ++i)
      pseudo[i] = downstream.predict(core::constant(dataset[i].frames))->value;
  }
#pragma omp parallel for schedule(dynamic) num_threads(core::num_threads())
  for (int64_t idx = 0; idx < total; ++idx) {
    const int64_t ci = idx / static_cast<int64_t>(conditions.size());
    const int64_t bi = idx % static_cast<int64_t>(conditions.size());
    const clips::VideoClip& clip = dataset[ci];
    EvalRecord rec;
    rec.clip_id = clip.source_id;
    rec.condition = conditions[bi];
    try {
      const codec::CodedClip coded = bridge.two_pass_abr(clip, conditions[bi]);
      rec.realized = coded.total_bitrate;
      core::NoGradGuard ng;
      const auto pred = downstream.predict(core::constant(coded.frames_hat))->value;
      rec.metric = vision::task_metric(pred, pseudo[ci], downstream.task());
    } catch (const std::exception&) {
      rec.failed = true;
    }
    report.records[idx] = rec;
  }
  return report;
}

codec::QpMap bisect_uniform_qp(const clips::VideoClip& clip, double target_bps,
                               const codec::CodecBridge& bridge, int iterations) {
  const int64_t mb_h = clip.height() / codec::kMacroblock;
  const int64_t mb_w = clip.width() / codec::kMacroblock;
  // realized bitrate decreases with QP: find the smallest feasible QP
  int lo = 0, hi = codec::kQpMax;
  for (int it = 0; it < iterations && lo < hi; ++it) {
    const int mid = (lo + hi) / 2;
    const auto coded = bridge.encode_decode(clip, codec::QpMap::uniform(clip.length(), mb_h,
                                                                        mb_w, mid));
    if (coded.total_bitrate <= target_bps)
      hi = mid;
    else
      lo = mid + 1;
  }
  return codec::QpMap::uniform(clip.length(), mb_h, mb_w, hi);
}

Report evaluate_baseline_bisection_oracle(const std::vector<clips::VideoClip>& dataset,
                                          const EvalProtocol& protocol,
                                          const codec::CodecBridge& bridge,
                                          vision::DownstreamModel& downstream) {
  return evaluate_policy(
      "bisection-oracle",
      [&](const clips::VideoClip& clip, double b) {
        return bisect_uniform_qp(clip, b, bridge);
      },
      dataset, protocol, bridge, downstream);
}

int calibrate_uniform_qp(const std::vector<clips::VideoClip>& calibration, double target_bps,
                         const codec::CodecBridge& bridge, int iterations) {
  if (calibration.empty()) throw ContractError("calibrate_uniform_qp: no calibration clips");
  auto mean_rate = [&](int qp) {
    double acc = 0;
    for (const auto& clip : calibration) {
      const auto coded = bridge.encode_decode(
          clip, codec::QpMap::uniform(clip.length(), clip.height() / codec::kMacroblock,
                                      clip.width() / codec::kMacroblock, qp));
      acc += coded.total_bitrate;
    }
    return acc / static_cast<double>(calibration.size());
  };
  int lo = 0, hi = codec::kQpMax;
  for (int it = 0; it < iterations && lo < hi; ++it) {
    const int mid = (lo + hi) / 2;
    if (mean_rate(mid) <= target_bps)
      hi = mid;
    else
      lo = mid + 1;
  }
  return hi;
}

Report evaluate_baseline_bisection(const std::vector<clips::VideoClip>& dataset,
                                   const EvalProtocol& protocol,
                                   const codec::CodecBridge& bridge,
                                   vision::DownstreamModel& downstream,
                                   const std::vector<clips::VideoClip>* calibration) {
  const std::vector<clips::VideoClip>& cal = calibration ? *calibration : dataset;
  // one uniform QP per condition, fixed before seeing the evaluated clip
  std::map<double, int> qp_for_condition;
  for (double b : protocol.condition_values())
    qp_for_condition[b] = calibrate_uniform_qp(cal, b, bridge);
  return evaluate_policy(
      "bisection",
      [&](const clips::VideoClip& clip, double b) {
        return codec::QpMap::uniform(clip.length(), clip.height() / codec::kMacroblock,
                                     clip.width() / codec::kMacroblock, qp_for_condition.at(b));
      },
      dataset, protocol, bridge, downstream);
}

std::vector<SweepPoint> sweep_uniform_qp(const std::vector<clips::VideoClip>& dataset,
                                         const codec::CodecBridge& bridge,
                                         vision::DownstreamModel& downstream,
                                         const std::vector<int>& qp_values) {
  if (dataset.empty()) throw ContractError("sweep_uniform_qp: empty dataset");
  std::vector<core::Tensor<float>> pseudo(dataset.size());
  {
    core::NoGradGuard ng;
    for (size_t i = 0; i < dataset.size(); ++i)
      pseudo[i] = downstream.predict(core::constant(dataset[i].frames))->value;
  }
  std::vector<SweepPoint> out;
  for (int qp : qp_values) {
    SweepPoint pt;
    pt.qp = qp;
    for (size_t i = 0; i < dataset.size(); ++i) {
      const clips::VideoClip& clip = dataset[i];
      const auto coded = bridge.encode_decode(
          clip, codec::QpMap::uniform(clip.length(), clip.height() / codec::kMacroblock,
                                      clip.width() / codec::kMacroblock, qp));
      core::NoGradGuard ng;
      const auto pred = downstream.predict(core::constant(coded.frames_hat))->value;
      pt.metric += vision::task_metric(pred, pseudo[i], downstream.task());
      pt.bitrate += coded.total_bitrate;
      pt.ssim += nn::ssim_value<float>(clip.frames, coded.frames_hat);
    }
    pt.metric /= dataset.size();
    pt.bitrate /= dataset.size();
    pt.ssim /= dataset.size();
    out.push_back(pt);
  }
  return out;
}

SurrogateValTable validate_surrogate(surrogate::SurrogateNet<float>& net,
                                     const std::vector<clips::VideoClip>& dataset,
                                     const codec::CodecBridge& bridge, int qp_step) {
  return validate_surrogate_fn(
      [&](const clips::VideoClip& clip, const codec::QpMap& map) {
        core::NoGradGuard ng;
        const auto& gop = bridge.gop_fixture(clip.length(), clip.height(), clip.width());
        auto qp_oh = surrogate::QpOneHot<float>::from_map(map);
        auto out = net.forward(core::constant(clip.frames), core::constant(qp_oh.values), gop);
        std::vector<double> logs;
        for (int64_t t = 0; t < clip.length(); ++t)
          logs.push_back(static_cast<double>(out.log_sizes->value[t]));
        return std::make_pair(out.frames->value, logs);
      },
      dataset, bridge, qp_step);
}

SurrogateValTable validate_surrogate_fn(const SurrogatePredictFn& fn,
                                        const std::vector<clips::VideoClip>& dataset,
                                        const codec::CodecBridge& bridge, int qp_step) {
  if (dataset.empty()) throw ContractError("validate_surrogate: empty dataset");
  SurrogateValTable table;
  for (int qp = 0; qp <= codec::kQpMax; qp += qp_step) {
    SurrogateValRow row;
    row.qp = qp;
    for (const auto& clip : dataset) {
      const auto map = codec::QpMap::uniform(clip.length(), clip.height() / codec::kMacroblock,
                                             clip.width() / codec::kMacroblock, qp);
      const auto coded = bridge.encode_decode(clip, map);
      const auto [frames, logs] = fn(clip, map);
      row.ssim += nn::ssim_value<float>(frames, coded.frames_hat);
      row.l1 += nn::l1_255<float>(frames, coded.frames_hat);
      double rel = 0;
      for (int64_t t = 0; t < clip.length(); ++t) {
        const double predicted = std::pow(10.0, logs[static_cast<size_t>(t)]);
        rel += std::abs(predicted - static_cast<double>(coded.file_sizes[t])) /
               static_cast<double>(coded.file_sizes[t]);
      }
      row.rel_err_pct += 100.0 * rel / clip.length();
    }
    row.ssim /= dataset.size();
    row.l1 /= dataset.size();
    row.rel_err_pct /= dataset.size();
    table.rows.push_back(row);
  }
  for (const auto& r : table.rows) {
    table.mean_ssim += r.ssim;
    table.mean_l1 += r.l1;
    table.mean_rel_err_pct += r.rel_err_pct;
  }
  const double n = static_cast<double>(table.rows.size());
  table.mean_ssim /= n;
  table.mean_l1 /= n;
  table.mean_rel_err_pct /= n;
  return table;
}

void write_report_files(const Report& report, const std::string& out_prefix) {
  const auto& tols = report.protocol.tolerances;
  // per-record table
  {
    std::vector<std::string> cols{"clip", "condition_bps", "realized_bps", "failed", "metric"};
    for (double t : tols) cols.push_back("dropped_tol" + util::fmt_num(100 * t, 3));
    util::TableWriter w(out_prefix + "_records.csv", cols);
    for (const auto& r : report.records) {
      std::vector<std::string> row{r.clip_id, util::fmt_num(r.condition, 9),
                                   util::fmt_num(r.realized, 9), r.failed ? "1" : "0",
                                   util::fmt_num(r.metric)};
      for (double t : tols) row.push_back(dropped(r, t) ? "1" : "0");
      w.row(row);
    }
  }
  // per-condition summary grid plus the overall average row
  {
    std::vector<std::string> cols{"condition_bps"};
    for (double t : tols) cols.push_back("acc_bw_tol" + util::fmt_num(100 * t, 3));
    for (double t : tols) cols.push_back("metric_tol" + util::fmt_num(100 * t, 3));
    util::TableWriter w(out_prefix + "_summary.csv", cols);
    for (double b : report.protocol.condition_values()) {
      const auto rs = report.for_condition(b);
      std::vector<std::string> row{util::fmt_num(b, 9)};
      for (double t : tols) row.push_back(util::fmt_num(acc_bw(rs, t)));
      for (double t : tols) row.push_back(util::fmt_num(metric_with_drops(rs, t, report.task)));
      w.row(row);
    }
    std::vector<std::string> overall{"overall"};
    for (double t : tols) overall.push_back(util::fmt_num(report.overall_acc_bw(t)));
    for (double t : tols) overall.push_back(util::fmt_num(report.overall_metric(t)));
    w.row(overall);
  }
  // plot-ready curve: acc_bw(tol 0) against the condition
  {
    util::TableWriter w(out_prefix + "_accbw_curve.csv", {"condition_bps", "acc_bw_tol0"});
    for (double b : report.protocol.condition_values())
      w.row({util::fmt_num(b, 9), util::fmt_num(acc_bw(report.for_condition(b), 0.0))});
  }
}

}  // namespace vidctl::eval
