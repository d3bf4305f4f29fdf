#pragma once

// PK-batched SGD training of an EmbeddingModel plus classifier under a
// configurable base loss with optional DSAM and triplet terms.

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "dsam/dataset.hpp"
#include "dsam/errors.hpp"
#include "dsam/losses.hpp"
#include "dsam/model.hpp"

namespace dsam {

std::string to_string(BaseLoss base);
BaseLoss base_loss_from_string(const std::string& name);

struct TrainConfig {
  BaseLoss base = BaseLoss::Softmax;
  bool use_dsam = false;
  bool use_triplet = false;
  double triplet_margin = 0.3;
  DsamConfig dsam{};
  AngularMarginConfig angular = AngularMarginConfig::arcface();
  int P = 8;
  int Q = 8;
  std::vector<int> hidden = {64, 64};
  int embedding_dim = 2;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay = 0.1;
  int lr_period = 10;
  double lr_floor = 1e-5;
  int epochs = 40;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::map<std::string, double> diagnostics;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::map<std::string, double> summary;
};

struct MetricsLog {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// One JSON object per line: all step records, then epoch records.
  void write_jsonl(std::ostream& out) const;
};

/// Thrown when a loss or parameter goes NaN/Inf; carries the failing step.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t step, const std::string& message);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct TrainResult {
  EmbeddingModel model;
  ClassifierWeights classifier;
  MetricsLog log;
};

/// Called after every epoch with the epoch index and current state; whatever
/// it returns is stored as that epoch's summary.
using EpochHook =
    std::function<std::map<std::string, double>(int epoch, const EmbeddingModel&, const ClassifierWeights&)>;

/// Loss of one batch of embeddings under the configured objective.
LossResult batch_loss(const Matrix& embeddings, const ClassifierWeights& classifier, const SampledBatch& batch,
                      const TrainConfig& config);

TrainResult train(const LabeledDataset& dataset, const TrainConfig& config, const EpochHook& hook = {});

}  // namespace dsam
