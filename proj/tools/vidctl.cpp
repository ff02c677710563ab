// vidctl: learned H.264 codec control toolkit.
//
//   vidctl pretrain-surrogate --config cfg [--seed N] [--out DIR]
//   vidctl train-control      --config cfg [--seed N] [--out DIR]
//   vidctl evaluate           --config cfg [--seed N] [--out DIR]
//   vidctl sweep-qp           --config cfg [--seed N] [--out DIR]
//   vidctl encode             --config cfg [--seed N] [--out DIR]
//
// Exit codes: 0 success, 2 configuration/validation error, 1 runtime failure.

#include <CLI11.hpp>

#include "vidctl/cli/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"learned H.264 codec control for downstream vision models"};
  app.require_subcommand(1);

  vidctl::cli::CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "run configuration file")->required();
    sub->add_option("--seed", args.seed_override, "override the config seed");
    sub->add_option("--out", args.out_override, "override the output directory");
  };

  auto* pretrain = app.add_subcommand("pretrain-surrogate",
                                      "pre-train the differentiable codec surrogate");
  auto* train = app.add_subcommand("train-control", "alternating control/surrogate training");
  auto* evaluate = app.add_subcommand("evaluate", "bandwidth-condition evaluation protocol");
  auto* sweep = app.add_subcommand("sweep-qp", "uniform-QP degradation sweep");
  auto* encode = app.add_subcommand("encode", "encode a video under a bandwidth target");
  for (auto* sub : {pretrain, train, evaluate, sweep, encode}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : vidctl::cli::kExitConfig;
  }

  if (pretrain->parsed()) return vidctl::cli::cmd_pretrain_surrogate(args);
  if (train->parsed()) return vidctl::cli::cmd_train_control(args);
  if (evaluate->parsed()) return vidctl::cli::cmd_evaluate(args);
  if (sweep->parsed()) return vidctl::cli::cmd_sweep_qp(args);
  if (encode->parsed()) return vidctl::cli::cmd_encode(args);
  return vidctl::cli::kExitConfig;
}
