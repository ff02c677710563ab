#include "vidctl/cli/cli.hpp"

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "vidctl/clipstore/video_io.hpp"
#include "vidctl/codec/decode.hpp"
#include "vidctl/control/model.hpp"
#include "vidctl/eval/evaluate.hpp"
#include "vidctl/fixtures/fixtures.hpp"
#include "vidctl/surrogate/pretrain.hpp"
#include "vidctl/train/loop.hpp"
#include "vidctl/util/table.hpp"

namespace vidctl::cli {

namespace fs = std::filesystem;
using util::Config;
using util::ConfigError;
using util::Validator;

namespace {

Config load_config(const CommonArgs& args) {
  if (args.config_path.empty()) throw ConfigError("missing --config");
  return Config::from_file(args.config_path);
}

std::vector<double> parse_num_list(const std::string& s) {
  std::vector<double> out;
  std::string cell;
  std::istringstream ss(s);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty()) out.push_back(std::stod(cell));
  }
  return out;
}

std::vector<int64_t> parse_int_list(const std::string& s) {
  std::vector<int64_t> out;
  for (double v : parse_num_list(s)) out.push_back(static_cast<int64_t>(v));
  return out;
}

void write_run_meta(const std::string& out_dir, const std::string& command,
                    const codec::BridgeConfig& bridge, uint64_t seed) {
  nlohmann::json meta;
  meta["command"] = command;
  meta["seed"] = seed;
  meta["encoder_version"] = codec::CodecBridge::encoder_version();
  meta["encoder_path"] = bridge.encoder_path.empty() ? "(in-process)" : bridge.encoder_path;
  meta["gop"] = bridge.gop;
  meta["preset"] = bridge.preset;
  std::ofstream f(fs::path(out_dir) / "run_meta.json");
  f << meta.dump(2) << "\n";
}

surrogate::SurrogateConfig surrogate_config(const Config& cfg, Validator& v) {
  surrogate::SurrogateConfig sc;
  const std::string scale = cfg.get_str("surrogate.scale", "desk");
  if (scale == "desk")
    sc = surrogate::SurrogateConfig::desk_scale();
  else if (scale == "paper")
    sc = surrogate::SurrogateConfig::paper_scale();
  else if (scale == "tiny")
    sc = surrogate::SurrogateConfig::tiny();
  else
    v.fail("surrogate.scale must be desk|paper|tiny, got " + scale);
  auto channels = [&](const std::string& key, std::array<int64_t, 4>& dst) {
    const std::string s = cfg.get_str(key, "");
    if (s.empty()) return;
    const auto list = parse_int_list(s);
    if (list.size() != 4) {
      v.fail(key + " must list exactly 4 channel counts");
      return;
    }
    std::copy(list.begin(), list.end(), dst.begin());
  };
  channels("surrogate.enc_channels", sc.enc_channels);
  channels("surrogate.dec_channels", sc.dec_channels);
  sc.cond_dim = cfg.get_int("surrogate.cond_dim", sc.cond_dim);
  sc.agru_iterations = static_cast<int>(cfg.get_int("surrogate.agru_iterations", sc.agru_iterations));
  sc.token_dim = cfg.get_int("surrogate.token_dim", sc.token_dim);
  sc.attn_heads = static_cast<int>(cfg.get_int("surrogate.attn_heads", sc.attn_heads));
  sc.gn_groups = cfg.get_int("surrogate.gn_groups", sc.gn_groups);
  sc.flow_width = cfg.get_int("surrogate.flow_width", sc.flow_width);
  sc.finetune_flow = cfg.get_bool("surrogate.finetune_flow", sc.finetune_flow);
  sc.a_rho_v = cfg.get_num("surrogate.loss.rho_v", sc.a_rho_v);
  sc.a_ssim = cfg.get_num("surrogate.loss.ssim", sc.a_ssim);
  sc.a_ff = cfg.get_num("surrogate.loss.ff", sc.a_ff);
  sc.a_rho_f = cfg.get_num("surrogate.loss.rho_f", sc.a_rho_f);
  sc.a_l1 = cfg.get_num("surrogate.loss.l1", sc.a_l1);
  try {
    sc.validate();
  } catch (const std::exception& e) {
    v.fail(e.what());
  }
  return sc;
}

control::ControlConfig control_config(const Config& cfg, Validator& v) {
  control::ControlConfig cc;
  const std::string scale = cfg.get_str("control.scale", "desk");
  if (scale == "desk")
    cc = control::ControlConfig::desk_scale();
  else if (scale == "paper")
    cc = control::ControlConfig::paper_scale();
  else
    v.fail("control.scale must be desk|paper, got " + scale);
  cc.bw_lo = cfg.get_num("bw.lo", cc.bw_lo);
  cc.bw_hi = cfg.get_num("bw.hi", cc.bw_hi);
  cc.tau_start = cfg.get_num("control.tau_start", cc.tau_start);
  cc.tau_end = cfg.get_num("control.tau_end", cc.tau_end);
  cc.ema_decay = cfg.get_num("control.ema_decay", cc.ema_decay);
  try {
    cc.validate();
  } catch (const std::exception& e) {
    v.fail(e.what());
  }
  return cc;
}

train::TrainControlConfig train_config(const Config& cfg, uint64_t seed, Validator& v) {
  train::TrainControlConfig tc;
  tc.steps = cfg.get_int("train.steps", 1000);
  tc.batch_size = cfg.get_int("train.batch_size", 2);
  tc.head_lr = cfg.get_num("train.head_lr", 1e-4);
  tc.backbone_lr = cfg.get_num("train.backbone_lr", 1e-5);
  tc.weight_decay = cfg.get_num("train.weight_decay", 1e-3);
  tc.surrogate_lr = cfg.get_num("train.surrogate_lr", 1e-4);
  tc.hard_gumbel = cfg.get_bool("train.hard_gumbel", true);
  tc.surrogate_interleave = cfg.get_bool("train.interleave", true);
  tc.control_qp_mix = cfg.get_num("train.qp_mix", 0.5);
  tc.p_temporal_share = cfg.get_num("train.p_temporal_share", 0.4);
  tc.log_every = cfg.get_int("train.log_every", 10);
  tc.seed = seed;
  tc.weights.a_b = cfg.get_num("loss.alpha_b", 6.0);
  tc.weights.a_p = cfg.get_num("loss.alpha_p", 2.0);
  tc.weights.a_r = cfg.get_num("loss.alpha_r", 1.0);
  tc.weights.eps_b = cfg.get_num("loss.eps_b", 0.02);
  tc.weights.eps_p = cfg.get_num("loss.eps_p", 0.02);
  tc.weights.eps_r = cfg.get_num("loss.eps_r", 0.05);
  tc.bandwidth.lo = cfg.get_num("bw.lo", 30e3);
  tc.bandwidth.hi = cfg.get_num("bw.hi", 900e3);
  v.require(tc.steps > 0, "train.steps must be positive");
  v.require(tc.batch_size > 0, "train.batch_size must be positive");
  try {
    tc.weights.validate();
  } catch (const std::exception& e) {
    v.fail(e.what());
  }
  return tc;
}

eval::EvalProtocol eval_protocol(const Config& cfg, Validator& v) {
  eval::EvalProtocol p;
  p.num_conditions = static_cast<int>(cfg.get_int("eval.conditions", 10));
  p.bw_lo = cfg.get_num("bw.lo", 30e3);
  p.bw_hi = cfg.get_num("bw.hi", 900e3);
  const std::string tols = cfg.get_str("eval.tolerances", "0,0.02,0.05");
  p.tolerances = parse_num_list(tols);
  try {
    p.validate();
  } catch (const std::exception& e) {
    v.fail(e.what());
  }
  return p;
}

void save_effective_config(const Config& cfg, const std::string& out_dir) {
  cfg.save((fs::path(out_dir) / "config.effective").string());
}

int guarded(const CommonArgs& args, const std::string& command,
            const std::function<void(const Config&, const std::string&, uint64_t)>& body) {
  try {
    Config cfg = load_config(args);
    const std::string out_dir = resolve_out_dir(cfg, args);
    const uint64_t seed = resolve_seed(cfg, args);
    body(cfg, out_dir, seed);
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "vidctl " << command << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "vidctl " << command << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

std::string resolve_out_dir(const Config& cfg, const CommonArgs& args) {
  std::string out = args.out_override.empty() ? cfg.get_str("out", "") : args.out_override;
  if (out.empty()) throw ConfigError("missing output directory: set `out` or pass --out");
  fs::create_directories(out);
  return out;
}

uint64_t resolve_seed(const Config& cfg, const CommonArgs& args) {
  if (args.seed_override >= 0) return static_cast<uint64_t>(args.seed_override);
  return static_cast<uint64_t>(cfg.get_int("seed", 1));
}

std::string find_shim_binary(const char* argv0) {
  if (const char* env = std::getenv("VIDCTL_SHIM")) {
    if (fs::exists(env)) return env;
  }
  std::error_code ec;
  fs::path self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    const fs::path candidate = self.parent_path() / "vidctl-x264-shim";
    if (fs::exists(candidate)) return candidate.string();
  }
  if (argv0) {
    const fs::path candidate = fs::path(argv0).parent_path() / "vidctl-x264-shim";
    if (fs::exists(candidate)) return candidate.string();
  }
  return {};
}

codec::BridgeConfig bridge_config(const Config& cfg, Validator& v, const char* argv0) {
  codec::BridgeConfig bc;
  const std::string path = cfg.get_str("bridge.encoder_path", "auto");
  if (path == "auto") {
    bc.encoder_path = find_shim_binary(argv0);  // empty falls back to in-process
  } else if (path == "inprocess") {
    bc.encoder_path.clear();
  } else {
    bc.encoder_path = path;
    if (!fs::exists(path)) v.fail("bridge.encoder_path does not exist: " + path);
  }
  bc.gop = static_cast<int>(cfg.get_int("bridge.gop", 8));
  bc.preset = cfg.get_str("bridge.preset", "medium");
  bc.base_qp = static_cast<int>(cfg.get_int("bridge.base_qp", 26));
  bc.temp_dir = cfg.get_str("bridge.temp_dir", "");
  v.require(bc.gop > 0, "bridge.gop must be positive");
  v.require(bc.base_qp >= 0 && bc.base_qp <= 51, "bridge.base_qp must be in [0, 51]");
  return bc;
}

std::vector<clips::VideoClip> load_dataset(const Config& cfg, const std::string& out_dir,
                                           uint64_t seed, Validator& v) {
  const std::string path = cfg.get_str("dataset.path", "");
  const double fps = cfg.get_num("dataset.fps", 17.0);
  const int factor = static_cast<int>(cfg.get_int("dataset.downsample_factor", 1));
  const int64_t crop_h = cfg.get_int("dataset.crop_h", 0);
  const int64_t crop_w = cfg.get_int("dataset.crop_w", 0);
  const std::string crop_policy = cfg.get_str("dataset.crop_policy", "center");
  const std::string stride_policy = cfg.get_str("dataset.stride_policy", "fixed");
  const int stride = static_cast<int>(cfg.get_int("dataset.stride", 3));
  const int64_t max_clips = cfg.get_int("dataset.max_clips", 0);

  if (path.empty()) {
    v.fail("dataset.path is required");
    v.throw_if_failed();
  }

  std::vector<std::string> sources;
  if (path.rfind("synthetic:", 0) == 0) {
    // synthetic:<sequences>x<frames>@<w>x<h>
    int seqs = 0, frames = 0, w = 0, h = 0;
    if (std::sscanf(path.c_str(), "synthetic:%dx%d@%dx%d", &seqs, &frames, &w, &h) != 4) {
      v.fail("dataset.path synthetic spec must be synthetic:<seqs>x<frames>@<w>x<h>");
      v.throw_if_failed();
    }
    const fs::path root = fs::path(out_dir) / "synthetic-data";
    if (!fs::exists(root / "seq000"))
      fixtures::write_synthetic_dataset(root.string(), seqs, frames, h, w, seed ^ 0xdadaULL);
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory()) sources.push_back(e.path().string());
    std::sort(sources.begin(), sources.end());
  } else if (fs::is_directory(path)) {
    bool has_subdirs = false;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_directory()) {
        sources.push_back(e.path().string());
        has_subdirs = true;
      } else if (e.is_regular_file()) {
        const auto ext = e.path().extension().string();
        if (ext == ".mp4" || ext == ".mkv" || ext == ".avi" || ext == ".h264")
          sources.push_back(e.path().string());
      }
    if (!has_subdirs && sources.empty()) sources.push_back(path);  // an image dir itself
    std::sort(sources.begin(), sources.end());
  } else if (fs::exists(path)) {
    sources.push_back(path);
  } else {
    v.fail("dataset.path does not exist: " + path);
    v.throw_if_failed();
  }

  clips::SamplerConfig sampler;
  sampler.fixed_stride = stride;
  sampler.stride_policy =
      stride_policy == "random" ? clips::StridePolicy::Random : clips::StridePolicy::Fixed;
  sampler.crop = crop_policy == "random" ? clips::CropPolicy::Random : clips::CropPolicy::Center;

  core::Rng rng(seed ^ 0x5a5a);
  std::vector<clips::VideoClip> out;
  for (const auto& src : sources) {
    clips::FrameSequence seq = clips::load_video(src, fps);
    if (factor > 1 || crop_h > 0) {
      const int64_t ch = crop_h > 0 ? crop_h : seq.frames.dim(2) / factor;
      const int64_t cw = crop_w > 0 ? crop_w : seq.frames.dim(3) / factor;
      seq.frames = clips::preprocess_frames(seq.frames, factor, ch, cw, sampler.crop, &rng);
    }
    for (auto& clip : clips::sample_clips(seq, sampler, &rng)) {
      clip.validate();
      out.push_back(std::move(clip));
      if (max_clips > 0 && static_cast<int64_t>(out.size()) >= max_clips) return out;
    }
  }
  if (out.empty()) throw ConfigError("dataset produced no clips: " + path);
  return out;
}

std::unique_ptr<vision::DownstreamModel> load_downstream_model(const Config& cfg,
                                                               const std::string& out_dir,
                                                               uint64_t seed, Validator& v) {
  const std::string adapter = cfg.get_str("downstream.adapter", "standin-seg:8");
  std::string ckpt = cfg.get_str("downstream.checkpoint", "");
  const bool train_if_missing = cfg.get_bool("downstream.train_if_missing", true);
  const int64_t train_steps = cfg.get_int("downstream.train_steps", 400);
  if (ckpt.empty()) ckpt = (fs::path(out_dir) / "downstream.ckpt").string();

  if (!fs::exists(ckpt)) {
    if (!train_if_missing) {
      v.fail("downstream.checkpoint does not exist: " + ckpt);
      v.throw_if_failed();
    }
    std::unique_ptr<vision::DownstreamModel> model;
    if (adapter.rfind("standin-seg", 0) == 0) {
      const auto colon = adapter.find(':');
      const int classes = colon == std::string::npos ? 8 : std::stoi(adapter.substr(colon + 1));
      model = fixtures::train_seg_standin(classes, seed ^ 0xd0c, static_cast<int>(train_steps));
    } else if (adapter == "standin-flow") {
      model = fixtures::train_flow_standin(seed ^ 0xd0c, static_cast<int>(train_steps));
    } else {
      v.fail("cannot train stand-in for adapter: " + adapter);
      v.throw_if_failed();
    }
    vision::save_downstream(ckpt, *model, adapter);
    return model;
  }
  return vision::load_downstream(ckpt, adapter);
}

// ------------------------------------------------------------------ commands

int cmd_pretrain_surrogate(const CommonArgs& args) {
  return guarded(args, "pretrain-surrogate", [&](const Config& cfg, const std::string& out_dir,
                                                 uint64_t seed) {
    Validator v;
    auto bridge_cfg = bridge_config(cfg, v);
    auto scfg = surrogate_config(cfg, v);
    surrogate::PretrainConfig pcfg;
    pcfg.steps = cfg.get_int("surrogate.steps", 2000);
    pcfg.batch_size = cfg.get_int("surrogate.batch_size", 2);
    pcfg.base_lr = cfg.get_num("surrogate.lr", 4e-4);
    pcfg.weight_decay = cfg.get_num("surrogate.weight_decay", 1e-5);
    pcfg.warmup_steps = cfg.get_int("surrogate.warmup", 100);
    pcfg.p_temporal_share = cfg.get_num("surrogate.p_temporal_share", 0.4);
    pcfg.augment.p_grayscale = cfg.get_num("augment.p_grayscale", 0.1);
    pcfg.augment.p_reverse = cfg.get_num("augment.p_reverse", 0.5);
    pcfg.augment.p_repeat = cfg.get_num("augment.p_repeat", 0.1);
    pcfg.log_every = cfg.get_int("surrogate.log_every", 25);
    pcfg.seed = seed;
    v.require(pcfg.steps > 0, "surrogate.steps must be positive");
    v.require(pcfg.batch_size > 0, "surrogate.batch_size must be positive");
    auto dataset = load_dataset(cfg, out_dir, seed, v);
    v.throw_if_failed();
    cfg.reject_unknown();
    save_effective_config(cfg, out_dir);

    codec::CodecBridge bridge(bridge_cfg);
    write_run_meta(out_dir, "pretrain-surrogate", bridge_cfg, seed);
    surrogate::SurrogateNet<float> net(scfg, seed);
    util::TableWriter metrics(
        (fs::path(out_dir) / "pretrain_metrics.csv").string(),
        {"step", "loss", "l_rho_v", "l_ssim", "l_ff", "l_rho_f", "l_l1", "lr"});
    auto result = surrogate::pretrain_surrogate(net, dataset, bridge, pcfg, &metrics);
    surrogate::save_surrogate((fs::path(out_dir) / "surrogate.ckpt").string(), net);
    std::cout << "pretrained surrogate for " << result.steps_run
              << " steps, final loss " << result.final_loss << "\n";
  });
}

int cmd_train_control(const CommonArgs& args) {
  return guarded(args, "train-control", [&](const Config& cfg, const std::string& out_dir,
                                            uint64_t seed) {
    Validator v;
    auto bridge_cfg = bridge_config(cfg, v);
    auto ccfg = control_config(cfg, v);
    auto tcfg = train_config(cfg, seed, v);
    const std::string surrogate_ckpt = cfg.get_str("surrogate.checkpoint", "");
    if (surrogate_ckpt.empty())
      v.fail("surrogate.checkpoint is required for train-control");
    else if (!fs::exists(surrogate_ckpt))
      v.fail("surrogate.checkpoint does not exist: " + surrogate_ckpt);
    auto dataset = load_dataset(cfg, out_dir, seed, v);
    auto downstream = load_downstream_model(cfg, out_dir, seed, v);
    v.throw_if_failed();
    cfg.reject_unknown();
    save_effective_config(cfg, out_dir);

    codec::CodecBridge bridge(bridge_cfg);
    write_run_meta(out_dir, "train-control", bridge_cfg, seed);
    auto surrogate_net = surrogate::load_surrogate(surrogate_ckpt);
    control::ControlNet net(ccfg, seed);
    control::ControlNet ema(ccfg, seed + 1);
    util::TableWriter metrics((fs::path(out_dir) / "train_metrics.csv").string(),
                              {"step", "loss", "l_b", "l_p", "l_r", "b", "b_tilde", "tau",
                               "gate", "surrogate_loss"});
    train::Trainer trainer(net, ema, *surrogate_net, bridge, *downstream, dataset, tcfg);
    trainer.run(&metrics);
    control::save_control((fs::path(out_dir) / "control_live.ckpt").string(), net,
                          "control-live");
    control::save_control((fs::path(out_dir) / "control_ema.ckpt").string(), ema,
                          "control-ema");
    surrogate::save_surrogate((fs::path(out_dir) / "surrogate_tuned.ckpt").string(),
                              *surrogate_net);
    std::cout << "trained control for " << tcfg.steps << " alternating steps\n";
  });
}

int cmd_evaluate(const CommonArgs& args) {
  return guarded(args, "evaluate", [&](const Config& cfg, const std::string& out_dir,
                                       uint64_t seed) {
    Validator v;
    auto bridge_cfg = bridge_config(cfg, v);
    auto protocol = eval_protocol(cfg, v);
    const std::string control_ckpt = cfg.get_str("control.checkpoint", "");
    if (control_ckpt.empty())
      v.fail("control.checkpoint is required for evaluate");
    else if (!fs::exists(control_ckpt))
      v.fail("control.checkpoint does not exist: " + control_ckpt);
    const std::string baseline = cfg.get_str("eval.baseline", "bisection");
    if (baseline != "none" && baseline != "abr" && baseline != "bisection" &&
        baseline != "bisection-oracle" && baseline != "both")
      v.fail("eval.baseline must be none|abr|bisection|both");
    const std::string surrogate_ckpt = cfg.get_str("surrogate.checkpoint", "");
    const bool run_surrogate_val =
        cfg.get_bool("eval.surrogate_validation", false);
    const int qp_step = static_cast<int>(cfg.get_int("eval.qp_step", 2));
    if (run_surrogate_val && (surrogate_ckpt.empty() || !fs::exists(surrogate_ckpt)))
      v.fail("eval.surrogate_validation needs an existing surrogate.checkpoint");
    auto dataset = load_dataset(cfg, out_dir, seed, v);
    auto downstream = load_downstream_model(cfg, out_dir, seed, v);
    v.throw_if_failed();
    cfg.reject_unknown();
    save_effective_config(cfg, out_dir);

    codec::CodecBridge bridge(bridge_cfg);
    write_run_meta(out_dir, "evaluate", bridge_cfg, seed);
    auto net = control::load_control(control_ckpt);
    auto report = eval::evaluate_control(*net, dataset, protocol, bridge, *downstream);
    eval::write_report_files(report, (fs::path(out_dir) / "control").string());
    std::cout << "control acc_bw(0%) = " << report.overall_acc_bw(0.0) << "\n";

    if (baseline == "abr" || baseline == "both") {
      auto abr = eval::evaluate_baseline_abr(dataset, protocol, bridge, *downstream);
      eval::write_report_files(abr, (fs::path(out_dir) / "abr").string());
      std::cout << "2-pass ABR acc_bw(0%) = " << abr.overall_acc_bw(0.0) << "\n";
    }
    if (baseline == "bisection" || baseline == "both") {
      auto bis = eval::evaluate_baseline_bisection(dataset, protocol, bridge, *downstream);
      eval::write_report_files(bis, (fs::path(out_dir) / "bisection").string());
      std::cout << "bisection acc_bw(0%) = " << bis.overall_acc_bw(0.0) << "\n";
    }
    if (run_surrogate_val) {
      auto snet = surrogate::load_surrogate(surrogate_ckpt);
      auto table = eval::validate_surrogate(*snet, dataset, bridge, qp_step);
      util::TableWriter w((fs::path(out_dir) / "surrogate_validation.csv").string(),
                          {"qp", "ssim", "l1_255", "rel_err_pct"});
      for (const auto& row : table.rows)
        w.row({std::to_string(row.qp), util::fmt_num(row.ssim), util::fmt_num(row.l1),
               util::fmt_num(row.rel_err_pct)});
      w.row({"mean", util::fmt_num(table.mean_ssim), util::fmt_num(table.mean_l1),
             util::fmt_num(table.mean_rel_err_pct)});
    }
  });
}

int cmd_sweep_qp(const CommonArgs& args) {
  return guarded(args, "sweep-qp", [&](const Config& cfg, const std::string& out_dir,
                                       uint64_t seed) {
    Validator v;
    auto bridge_cfg = bridge_config(cfg, v);
    std::string qps = cfg.get_str("sweep.qp_values", "");
    if (qps.empty()) {
      // the even grid plus the endpoint, 27 points
      for (int q = 0; q <= 50; q += 2) qps += std::to_string(q) + ",";
      qps += "51";
    }
    const auto qp_values = parse_int_list(qps);
    for (int64_t q : qp_values)
      if (q < 0 || q > 51) v.fail("sweep.qp_values entries must be in [0, 51]");
    auto dataset = load_dataset(cfg, out_dir, seed, v);
    auto downstream = load_downstream_model(cfg, out_dir, seed, v);
    v.throw_if_failed();
    cfg.reject_unknown();
    save_effective_config(cfg, out_dir);

    codec::CodecBridge bridge(bridge_cfg);
    write_run_meta(out_dir, "sweep-qp", bridge_cfg, seed);
    std::vector<int> qp_ints(qp_values.begin(), qp_values.end());
    auto curve = eval::sweep_uniform_qp(dataset, bridge, *downstream, qp_ints);
    util::TableWriter w((fs::path(out_dir) / "qp_sweep.csv").string(),
                        {"qp", "metric", "bitrate_bps", "ssim"});
    for (const auto& pt : curve)
      w.row({std::to_string(pt.qp), util::fmt_num(pt.metric), util::fmt_num(pt.bitrate, 9),
             util::fmt_num(pt.ssim)});
    std::cout << "swept " << curve.size() << " QP values over " << dataset.size()
              << " clips\n";
  });
}

int cmd_encode(const CommonArgs& args) {
  return guarded(args, "encode", [&](const Config& cfg, const std::string& out_dir,
                                     uint64_t seed) {
    Validator v;
    auto bridge_cfg = bridge_config(cfg, v);
    const std::string input = cfg.get_str("encode.input", "");
    const double fps = cfg.get_num("encode.fps", 17.0);
    const double bandwidth = cfg.get_num("encode.bandwidth", 0.0);
    const std::string control_ckpt = cfg.get_str("control.checkpoint", "");
    std::string output = cfg.get_str("encode.output", "");
    const int factor = static_cast<int>(cfg.get_int("encode.downsample_factor", 1));
    const int64_t crop_h = cfg.get_int("encode.crop_h", 0);
    const int64_t crop_w = cfg.get_int("encode.crop_w", 0);
    if (input.empty())
      v.fail("encode.input is required");
    else if (!fs::exists(input))
      v.fail("encode.input does not exist: " + input);
    if (bandwidth <= 0) v.fail("encode.bandwidth must be positive (bit/s)");
    if (control_ckpt.empty())
      v.fail("control.checkpoint is required for encode");
    else if (!fs::exists(control_ckpt))
      v.fail("control.checkpoint does not exist: " + control_ckpt);
    if (output.empty()) output = (fs::path(out_dir) / "encoded.h264").string();
    v.throw_if_failed();
    cfg.reject_unknown();
    save_effective_config(cfg, out_dir);

    codec::CodecBridge bridge(bridge_cfg);
    write_run_meta(out_dir, "encode", bridge_cfg, seed);
    auto net = control::load_control(control_ckpt);

    clips::FrameSequence seq = clips::load_video(input, fps);
    core::Rng rng(seed);
    if (factor > 1 || crop_h > 0) {
      const int64_t ch = crop_h > 0 ? crop_h : seq.frames.dim(2) / factor;
      const int64_t cw = crop_w > 0 ? crop_w : seq.frames.dim(3) / factor;
      seq.frames =
          clips::preprocess_frames(seq.frames, factor, ch, cw, clips::CropPolicy::Center, &rng);
    }
    // deployment windowing: consecutive non-overlapping 8-frame windows
    clips::SamplerConfig sampler;
    sampler.stride_policy = clips::StridePolicy::Fixed;
    sampler.fixed_stride = 1;
    auto windows = clips::sample_clips(seq, sampler);

    std::vector<uint8_t> full_stream;
    util::TableWriter report((fs::path(out_dir) / "encode_report.csv").string(),
                             {"window", "realized_bps", "qp_mean", "qp_min", "qp_max"});
    for (size_t wi = 0; wi < windows.size(); ++wi) {
      const auto qp = net->infer_qp(windows[wi].frames, bandwidth);
      std::vector<uint8_t> bs;
      const auto coded = bridge.encode_decode_bitstream(windows[wi], qp, &bs);
      full_stream.insert(full_stream.end(), bs.begin(), bs.end());
      double mean = 0;
      int mn = 51, mx = 0;
      for (int64_t i = 0; i < qp.values.numel(); ++i) {
        mean += qp.values[i];
        mn = std::min(mn, qp.values[i]);
        mx = std::max(mx, qp.values[i]);
      }
      mean /= static_cast<double>(qp.values.numel());
      report.row({std::to_string(wi), util::fmt_num(coded.total_bitrate, 9),
                  util::fmt_num(mean, 4), std::to_string(mn), std::to_string(mx)});
    }
    std::ofstream f(output, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write bitstream: " + output);
    f.write(reinterpret_cast<const char*>(full_stream.data()),
            static_cast<std::streamsize>(full_stream.size()));
    f.close();

    // standard-compliance check with the stock decoder
    const auto decoded = codec::decode_h264(full_stream);
    if (decoded.frames.size() != windows.size() * clips::kClipLength)
      throw std::runtime_error("emitted bitstream failed the decode check");
    std::cout << "encoded " << windows.size() << " windows (" << decoded.frames.size()
              << " frames) to " << output << "\n";
  });
}

}  // namespace vidctl::cli
