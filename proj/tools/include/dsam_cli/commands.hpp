#pragma once

// Subcommands of the `dsam` tool. Each returns the process exit status:
// 0 success, 1 check failure, 2 invalid input, 3 numerical abort.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "dsam/evaluation.hpp"
#include "dsam/trainer.hpp"
#include "dsam_cli/run_config.hpp"

namespace dsam::cli {

enum ExitStatus : int { kSuccess = 0, kCheckFailed = 1, kInvalidInput = 2, kNumericalAbort = 3 };

/// Reads `config.dataset` if set, otherwise generates from `config.data`.
LabeledDataset load_or_generate(const RunConfig& config);

/// Rows used for training and rows used for retrieval evaluation.
struct TrainEvalSplit {
  LabeledDataset train;
  LabeledDataset eval;
};
TrainEvalSplit split_for_training(const RunConfig& config, const LabeledDataset& ds);

RetrievalReport evaluate_model(const EmbeddingModel& model, const LabeledDataset& eval_rows,
                               const RunConfig& config, bool self_retrieval = false);

struct RunOutcome {
  TrainResult trained;
  RetrievalReport report;
  MarginDiagnostics diagnostics;  // on the training rows
};
RunOutcome train_and_evaluate(const RunConfig& config, const LabeledDataset& ds);

/// Writes checkpoint.json, metrics.jsonl and embeddings.csv under `dir`.
void write_run_artifacts(const RunOutcome& outcome, const LabeledDataset& train_rows, const std::filesystem::path& dir);

/// Maps library errors onto exit statuses and prints them to `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

int cmd_gen_data(const RunConfig& config, const std::filesystem::path& out_file, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, const std::filesystem::path& data,
             bool self_retrieval, std::ostream& out, std::ostream& err);
int cmd_gradcheck(std::uint64_t seed, double tolerance, std::ostream& out, std::ostream& err);
int cmd_toy2d(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_margin_sweep(const RunConfig& config, const std::vector<double>& margins, std::ostream& out,
                     std::ostream& err);

/// The four runs of the toy experiment: SoftMax, SoftMax+DSAM, angular margin, angular margin+DSAM.
struct ToyVariant {
  std::string name;
  BaseLoss base;
  bool use_dsam;
};
std::vector<ToyVariant> toy_variants();

}  // namespace dsam::cli
