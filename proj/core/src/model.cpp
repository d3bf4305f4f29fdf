#include "dsam/model.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dsam/errors.hpp"

namespace dsam {
namespace {

constexpr const char* kCheckpointFormat = "dsam-checkpoint";
constexpr int kCheckpointVersion = 1;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) fail(ErrorCode::SchemaError, "ragged matrix in checkpoint");
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return m;
}

nlohmann::json vector_to_json(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

Vector vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

EmbeddingModel::EmbeddingModel(std::vector<int> widths, Rng& rng) : widths_(std::move(widths)) {
  if (widths_.size() < 2) fail(ErrorCode::InvalidConfig, "model needs at least input and output widths");
  for (int w : widths_) {
    if (w < 1) fail(ErrorCode::InvalidConfig, "layer widths must be positive");
  }
  for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[k]));
    layers_.push_back({uniform_matrix(widths_[k + 1], widths_[k], bound, rng), Vector::Zero(widths_[k + 1])});
  }
}

EmbeddingModel::EmbeddingModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) fail(ErrorCode::InvalidConfig, "model needs at least one layer");
  widths_.push_back(static_cast<int>(layers_.front().W.cols()));
  for (const auto& layer : layers_) {
    if (layer.W.cols() != widths_.back() || layer.b.size() != layer.W.rows()) {
      fail(ErrorCode::DimensionMismatch, "inconsistent layer shapes");
    }
    widths_.push_back(static_cast<int>(layer.W.rows()));
  }
}

bool EmbeddingModel::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.W.allFinite() || !layer.b.allFinite()) return false;
  }
  return true;
}

namespace {

// Pre-activations per layer; activations[k] is the input to layer k.
struct Trace {
  std::vector<Matrix> activations;
  std::vector<Matrix> pre;
};

Trace run_forward(const EmbeddingModel& model, const Matrix& inputs) {
  if (inputs.cols() != model.input_dim()) {
    fail(ErrorCode::DimensionMismatch, "input width " + std::to_string(inputs.cols()) + " != model input " +
                                           std::to_string(model.input_dim()));
  }
  Trace trace;
  trace.activations.push_back(inputs);
  const auto& layers = model.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    Matrix z = trace.activations.back() * layers[k].W.transpose();
    z.rowwise() += layers[k].b.transpose();
    trace.pre.push_back(z);
    if (k + 1 < layers.size()) {
      trace.activations.push_back(z.cwiseMax(0.0));
    } else {
      trace.activations.push_back(std::move(z));
    }
  }
  return trace;
}

}  // namespace

Matrix forward(const EmbeddingModel& model, const Matrix& inputs) {
  return std::move(run_forward(model, inputs).activations.back());
}

ModelGradients backward(const EmbeddingModel& model, const Matrix& inputs, const Matrix& grad_embeddings) {
  const Trace trace = run_forward(model, inputs);
  if (grad_embeddings.rows() != inputs.rows() || grad_embeddings.cols() != model.output_dim()) {
    fail(ErrorCode::DimensionMismatch, "grad_embeddings shape does not match forward output");
  }
  const auto& layers = model.layers();
  ModelGradients out;
  out.layers.resize(layers.size());
  Matrix upstream = grad_embeddings;
  for (std::size_t k = layers.size(); k-- > 0;) {
    if (k + 1 < layers.size()) {
      // ReLU derivative, 0 at exactly 0.
      upstream = upstream.cwiseProduct((trace.pre[k].array() > 0.0).cast<double>().matrix());
    }
    out.layers[k].W = upstream.transpose() * trace.activations[k];
    out.layers[k].b = upstream.colwise().sum().transpose();
    upstream = upstream * layers[k].W;
  }
  out.inputs = std::move(upstream);
  return out;
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const SgdConfig& cfg) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "sgd_step: params, grads and velocity must have equal size");
  }
  if (!(cfg.lr > 0.0)) fail(ErrorCode::InvalidConfig, "learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + cfg.weight_decay * params[i];
    velocity[i] = cfg.momentum * velocity[i] + g;
    params[i] -= cfg.lr * velocity[i];
  }
}

double lr_schedule(int epoch, double base_lr, double decay_factor, int period, double floor) {
  if (epoch < 0) fail(ErrorCode::InvalidConfig, "epoch must be >= 0");
  if (period < 1) fail(ErrorCode::InvalidConfig, "lr period must be >= 1");
  return std::max(floor, base_lr * std::pow(decay_factor, epoch / period));
}

ClassifierWeights init_classifier(int classes, int dim, Rng& rng) {
  return {uniform_matrix(classes, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng), Vector::Zero(classes)};
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["widths"] = checkpoint.model.widths();
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : checkpoint.model.layers()) {
    j["layers"].push_back({{"W", matrix_to_json(layer.W)}, {"b", vector_to_json(layer.b)}});
  }
  j["classifier"] = {{"W", matrix_to_json(checkpoint.classifier.W)},
                     {"bias", vector_to_json(checkpoint.classifier.bias)}};
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << j.dump(1) << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != kCheckpointFormat) fail(ErrorCode::SchemaError, "not a dsam checkpoint");
    if (j.at("version") != kCheckpointVersion) fail(ErrorCode::SchemaError, "unsupported checkpoint version");
    std::vector<DenseLayer> layers;
    for (const auto& layer : j.at("layers")) {
      layers.push_back({matrix_from_json(layer.at("W")), vector_from_json(layer.at("b"))});
    }
    Checkpoint cp{EmbeddingModel(std::move(layers)),
                  {matrix_from_json(j.at("classifier").at("W")), vector_from_json(j.at("classifier").at("bias"))}};
    if (cp.model.widths() != j.at("widths").get<std::vector<int>>()) {
      fail(ErrorCode::SchemaError, "checkpoint widths disagree with layer shapes");
    }
    return cp;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace dsam
