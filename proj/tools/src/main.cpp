// dsam: data generation, training, evaluation, gradient checks, the 2D toy
// experiment and the margin sweep.
//
// Usage:
//   dsam gen-data --config cfg.json --out data.csv
//   dsam train --config cfg.json [--out dir] [--seed N] [--set train.epochs=5]
//   dsam eval --checkpoint dir/checkpoint.json --data data.csv [--config cfg.json]
//   dsam gradcheck [--seed N] [--tolerance 1e-5]
//   dsam toy2d [--config cfg.json] [--out dir]
//   dsam margin-sweep --config cfg.json --margins 0.7,0.8,0.9

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsam/errors.hpp"
#include "dsam_cli/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& flags, const char* out_help = "output directory") {
  cmd->add_option("--config", flags.config, "JSON run configuration");
  cmd->add_option("--out", flags.out, out_help);
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--set", flags.overrides, "override a config field, e.g. train.epochs=5")->take_all();
}

// flag > file > default
dsam::cli::RunConfig resolve(const CommonFlags& flags, dsam::cli::RunConfig defaults, bool out_is_dir = true) {
  dsam::cli::RunConfig config = flags.config.empty() ? std::move(defaults) : dsam::cli::load_run_config(flags.config);
  for (const auto& assignment : flags.overrides) dsam::cli::apply_override(config, assignment);
  if (flags.seed) config.seed = *flags.seed;
  if (out_is_dir && !flags.out.empty()) config.out_dir = flags.out;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace dsam::cli;
  CLI::App app{"DSAM metric-learning laboratory"};
  app.require_subcommand(1);

  CommonFlags gen_flags;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset CSV");
  add_common(gen, gen_flags, "output CSV file");
  gen->get_option("--out")->required();

  CommonFlags train_flags;
  std::string train_data;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, metrics and embeddings");
  add_common(train_cmd, train_flags);
  train_cmd->add_option("--data", train_data, "dataset CSV (default: generate from config)");

  CommonFlags eval_flags;
  std::string checkpoint;
  std::string eval_data;
  bool self_retrieval = false;
  auto* eval_cmd = app.add_subcommand("eval", "retrieval evaluation of a checkpoint");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  eval_cmd->add_option("--data", eval_data, "dataset CSV");
  eval_cmd->add_flag("--self-retrieval", self_retrieval, "use the whole dataset as both queries and gallery");

  std::uint64_t grad_seed = 2024;
  double tolerance = 1e-5;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
  grad->add_option("--seed", grad_seed, "instance seed");
  grad->add_option("--tolerance", tolerance, "maximum relative error");

  CommonFlags toy_flags;
  auto* toy = app.add_subcommand("toy2d", "2D embedding comparison of SoftMax / angular margin with and without DSAM");
  add_common(toy, toy_flags);

  CommonFlags sweep_flags;
  std::vector<double> margins;
  auto* sweep = app.add_subcommand("margin-sweep", "train and evaluate DSAM at several negative margins");
  add_common(sweep, sweep_flags);
  sweep->add_option("--margins", margins, "comma-separated m_neg values")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kInvalidInput;
  }

  auto resolved = [&](const CommonFlags& flags, RunConfig defaults, bool out_is_dir, RunConfig& config) {
    return guarded([&] {
      config = resolve(flags, std::move(defaults), out_is_dir);
      return kSuccess;
    }, std::cerr);
  };

  RunConfig config;
  if (*gen) {
    if (int rc = resolved(gen_flags, RunConfig{}, false, config); rc != kSuccess) return rc;
    return cmd_gen_data(config, gen_flags.out, std::cout, std::cerr);
  }
  if (*train_cmd) {
    if (int rc = resolved(train_flags, RunConfig{}, true, config); rc != kSuccess) return rc;
    if (!train_data.empty()) config.dataset = train_data;
    return cmd_train(config, std::cout, std::cerr);
  }
  if (*eval_cmd) {
    if (int rc = resolved(eval_flags, RunConfig{}, true, config); rc != kSuccess) return rc;
    return cmd_eval(config, checkpoint, eval_data, self_retrieval, std::cout, std::cerr);
  }
  if (*grad) return cmd_gradcheck(grad_seed, tolerance, std::cout, std::cerr);
  if (*toy) {
    if (int rc = resolved(toy_flags, reference_toy_config(), true, config); rc != kSuccess) return rc;
    return cmd_toy2d(config, std::cout, std::cerr);
  }
  if (*sweep) {
    if (int rc = resolved(sweep_flags, RunConfig{}, true, config); rc != kSuccess) return rc;
    return cmd_margin_sweep(config, margins, std::cout, std::cerr);
  }
  return kInvalidInput;
}
