#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsam/dataset.hpp"
#include "dsam/losses.hpp"
#include "dsam/trainer.hpp"

namespace dsam::cli {

struct SplitConfig {
  int test_per_class = 0;      // rows per class held out of training; 0 = evaluate on the training rows
  int queries_per_class = 2;   // queries drawn per class from the evaluation rows
  int max_rank = 20;
};

/// Everything a command needs. One master seed drives data generation,
/// training and splitting through separate derived streams.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";
  std::string dataset;  // CSV path; empty = generate from `data`
  SyntheticSpec data{};
  TrainConfig train{};
  SplitConfig split{};

  SyntheticSpec data_spec() const;
  TrainConfig train_config() const;
  std::uint64_t split_seed() const;
  std::uint64_t holdout_seed() const;

  void validate() const;
};

/// Desk-scale reference configuration for the 2D toy experiment.
RunConfig reference_toy_config();

std::string to_json(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `section.key=value` (or `key=value` for top-level fields).
/// Unknown keys and ill-typed values throw InvalidConfig.
void apply_override(RunConfig& config, const std::string& assignment);

}  // namespace dsam::cli
