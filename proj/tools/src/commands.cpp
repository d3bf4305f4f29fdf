#include "dsam_cli/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dsam/errors.hpp"
#include "dsam/gradcheck.hpp"

namespace dsam::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create directory " + dir.string() + ": " + ec.message());
}

json diagnostics_json(const MarginDiagnostics& d) {
  json j{{"mean_intraclass_angle", d.mean_intraclass_angle},
         {"min_interclass_gap", d.min_interclass_gap},
         {"margin_satisfaction", d.margin_satisfaction},
         {"samples_used", d.samples_used}};
  if (d.spread_reduction) j["spread_reduction"] = *d.spread_reduction;
  return j;
}

json retrieval_summary(const RetrievalReport& r) {
  return {{"mAP", r.mAP}, {"cmc1", r.cmc_at(1)}, {"cmc5", r.cmc_at(5)}};
}

std::string summary_line(const RetrievalReport& r) {
  return "mAP=" + fixed(r.mAP) + " cmc1=" + fixed(r.cmc_at(1)) + " cmc5=" + fixed(r.cmc_at(5));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace

LabeledDataset load_or_generate(const RunConfig& config) {
  if (config.dataset.empty()) return generate_synthetic(config.data_spec());
  if (!fs::exists(config.dataset)) fail(ErrorCode::IoError, "dataset " + config.dataset + " does not exist");
  return load_csv(config.dataset);
}

TrainEvalSplit split_for_training(const RunConfig& config, const LabeledDataset& ds) {
  if (config.split.test_per_class == 0) return {ds, ds};
  Split split = query_gallery_split(ds, config.split.test_per_class, config.holdout_seed());
  return {std::move(split.second), std::move(split.first)};
}

RetrievalReport evaluate_model(const EmbeddingModel& model, const LabeledDataset& eval_rows, const RunConfig& config,
                               bool self_retrieval) {
  const auto max_rank = static_cast<std::size_t>(config.split.max_rank);
  if (self_retrieval) {
    const Matrix emb = forward(model, eval_rows.features);
    return evaluate(emb, eval_rows.labels, emb, eval_rows.labels, max_rank);
  }
  const Split qg = query_gallery_split(eval_rows, config.split.queries_per_class, config.split_seed());
  return evaluate(forward(model, qg.first.features), qg.first.labels, forward(model, qg.second.features),
                  qg.second.labels, max_rank);
}

RunOutcome train_and_evaluate(const RunConfig& config, const LabeledDataset& ds) {
  config.validate();
  const TrainEvalSplit parts = split_for_training(config, ds);
  RunOutcome outcome{train(parts.train, config.train_config()), {}, {}};
  outcome.report = evaluate_model(outcome.trained.model, parts.eval, config);
  outcome.diagnostics = margin_diagnostics(forward(outcome.trained.model, parts.train.features), parts.train.labels,
                                           config.train.dsam);
  return outcome;
}

void write_run_artifacts(const RunOutcome& outcome, const LabeledDataset& train_rows, const fs::path& dir) {
  ensure_dir(dir);
  save_checkpoint({outcome.trained.model, outcome.trained.classifier}, dir / "checkpoint.json");
  std::ostringstream metrics;
  outcome.trained.log.write_jsonl(metrics);
  const json final_record{{"type", "final"},
                          {"seed", outcome.trained.log.seed},
                          {"diagnostics", diagnostics_json(outcome.diagnostics)},
                          {"retrieval", retrieval_summary(outcome.report)}};
  metrics << final_record.dump() << '\n';
  write_text(dir / "metrics.jsonl", metrics.str());
  save_embeddings_csv(forward(outcome.trained.model, train_rows.features), train_rows, dir / "embeddings.csv");
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::NonFiniteLoss ? kNumericalAbort : kInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInvalidInput;
  }
}

int cmd_gen_data(const RunConfig& config, const fs::path& out_file, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    config.data.validate();
    const LabeledDataset ds = generate_synthetic(config.data_spec());
    if (out_file.has_parent_path()) ensure_dir(out_file.parent_path());
    save_csv(ds, out_file);
    out << "wrote " << ds.size() << " rows, " << ds.class_count() << " classes to " << out_file.string() << '\n';
    return kSuccess;
  }, err);
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    config.validate();
    const LabeledDataset ds = load_or_generate(config);
    const RunOutcome outcome = train_and_evaluate(config, ds);
    write_run_artifacts(outcome, split_for_training(config, ds).train, config.out_dir);
    out << "trained " << config.train.epochs << " epochs, " << outcome.trained.log.steps.size() << " steps\n";
    out << summary_line(outcome.report) << '\n';
    out << "mean_intraclass_angle=" << fixed(outcome.diagnostics.mean_intraclass_angle)
        << " min_interclass_gap=" << fixed(outcome.diagnostics.min_interclass_gap)
        << " margin_satisfaction=" << fixed(outcome.diagnostics.margin_satisfaction) << '\n';
    return kSuccess;
  }, err);
}

int cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& data, bool self_retrieval,
             std::ostream& out, std::ostream& err) {
  return guarded([&] {
    config.validate();
    const Checkpoint cp = load_checkpoint(checkpoint);
    RunConfig with_data = config;
    if (!data.empty()) with_data.dataset = data.string();
    const LabeledDataset ds = load_or_generate(with_data);
    if (ds.features.cols() != cp.model.input_dim()) {
      fail(ErrorCode::DimensionMismatch, "dataset has " + std::to_string(ds.features.cols()) +
                                             " features, checkpoint expects " + std::to_string(cp.model.input_dim()));
    }
    const LabeledDataset eval_rows = self_retrieval ? ds : split_for_training(with_data, ds).eval;
    const RetrievalReport report = evaluate_model(cp.model, eval_rows, with_data, self_retrieval);
    ensure_dir(config.out_dir);
    write_text(fs::path(config.out_dir) / "report.json", report.to_json() + "\n");
    out << summary_line(report) << '\n';
    return kSuccess;
  }, err);
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    GradCheckOptions options;
    options.seed = seed;
    options.tolerance = tolerance;
    const auto rows = run_gradcheck(options);
    bool all = true;
    char line[160];
    std::snprintf(line, sizeof(line), "%-32s %10s %14s %s\n", "loss", "instances", "worst_rel_err", "status");
    out << line;
    for (const auto& row : rows) {
      std::snprintf(line, sizeof(line), "%-32s %10d %14.6e %s\n", row.name.c_str(), row.instances, row.worst_error,
                    row.passed ? "PASS" : "FAIL");
      out << line;
      if (!row.passed) {
        all = false;
        err << "gradcheck failed: " << row.name << " worst relative error " << exact(row.worst_error)
            << " > tolerance " << exact(tolerance) << '\n';
      }
    }
    return all ? kSuccess : kCheckFailed;
  }, err);
}

std::vector<ToyVariant> toy_variants() {
  return {{"softmax", BaseLoss::Softmax, false},
          {"softmax_dsam", BaseLoss::Softmax, true},
          {"angular_margin", BaseLoss::AngularMargin, false},
          {"angular_margin_dsam", BaseLoss::AngularMargin, true}};
}

int cmd_toy2d(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded([&] {
    config.validate();
    if (config.train.embedding_dim != 2) fail(ErrorCode::InvalidConfig, "toy2d requires train.embedding_dim = 2");
    if (config.data.classes < 8) fail(ErrorCode::InvalidConfig, "toy2d requires data.classes >= 8");
    const LabeledDataset ds = load_or_generate(config);
    const fs::path dir = config.out_dir;
    ensure_dir(dir);

    json runs = json::object();
    std::optional<MarginDiagnostics> reference;
    for (const ToyVariant& variant : toy_variants()) {
      RunConfig run = config;
      run.train.base = variant.base;
      run.train.use_dsam = variant.use_dsam;
      const TrainEvalSplit parts = split_for_training(run, ds);
      const TrainResult trained = train(parts.train, run.train_config());
      const Matrix emb = forward(trained.model, parts.train.features);
      MarginDiagnostics diag = margin_diagnostics(emb, parts.train.labels, run.train.dsam);
      if (!reference) reference = diag;
      attach_spread_reduction(diag, *reference);

      save_embeddings_csv(emb, parts.train, dir / ("embeddings_" + variant.name + ".csv"));
      std::ostringstream angles;
      angles << "id,label,theta\n";
      for (Eigen::Index i = 0; i < emb.rows(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        angles << parts.train.ids[k] << ',' << parts.train.labels[k] << ',' << exact(std::atan2(emb(i, 1), emb(i, 0)))
               << '\n';
      }
      write_text(dir / ("angles_" + variant.name + ".csv"), angles.str());
      runs[variant.name] = diagnostics_json(diag);
      out << variant.name << ": mean_intraclass_angle=" << fixed(diag.mean_intraclass_angle)
          << " min_interclass_gap=" << fixed(diag.min_interclass_gap)
          << " margin_satisfaction=" << fixed(diag.margin_satisfaction) << '\n';
    }
    const json report{{"reference", "softmax"}, {"m_neg", config.train.dsam.m_neg}, {"seed", config.seed},
                      {"runs", runs}};
    write_text(dir / "diagnostics.json", report.dump(2) + "\n");
    return kSuccess;
  }, err);
}

int cmd_margin_sweep(const RunConfig& config, const std::vector<double>& margins, std::ostream& out,
                     std::ostream& err) {
  return guarded([&] {
    config.validate();
    if (margins.empty()) fail(ErrorCode::InvalidConfig, "margin list is empty");
    for (double m : margins) {
      if (!(m > 0.0 && m < std::expm1(4.0))) fail(ErrorCode::InvalidConfig, "margin " + exact(m) + " outside (0, e^4 - 1)");
    }
    const LabeledDataset ds = load_or_generate(config);
    const fs::path dir = config.out_dir;
    ensure_dir(dir);

    std::ostringstream table;
    table << "m_neg,mAP,cmc1,cmc5,status\n";
    int status = kSuccess;
    for (double m : margins) {
      RunConfig run = config;
      run.train.use_dsam = true;
      run.train.dsam.m_neg = m;
      run.out_dir = (dir / ("m_neg_" + exact(m))).string();
      const int code = guarded([&] {
        const RunOutcome outcome = train_and_evaluate(run, ds);
        write_run_artifacts(outcome, split_for_training(run, ds).train, run.out_dir);
        table << exact(m) << ',' << exact(outcome.report.mAP) << ',' << exact(outcome.report.cmc_at(1)) << ','
              << exact(outcome.report.cmc_at(5)) << ",ok\n";
        out << "m_neg=" << fixed(m, 3) << ' ' << summary_line(outcome.report) << '\n';
        return kSuccess;
      }, err);
      if (code != kSuccess) {
        table << exact(m) << ",,,,failed\n";
        out << "m_neg=" << fixed(m, 3) << " failed\n";
        status = std::max(status, code);
      }
    }
    write_text(dir / "margin_sweep.csv", table.str());
    return status;
  }, err);
}

}  // namespace dsam::cli
