#pragma once

// Small fully connected embedding network: ReLU on hidden layers, linear
// output layer, so embeddings range over all of R^d.

#include <filesystem>
#include <span>
#include <vector>

#include "dsam/losses.hpp"
#include "dsam/numerics.hpp"
#include "dsam/sampling.hpp"

namespace dsam {

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;  // out
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  EmbeddingModel(std::vector<int> widths, Rng& rng);
  /// Takes ownership of explicit layers; widths are derived from them.
  explicit EmbeddingModel(std::vector<DenseLayer> layers);

  const std::vector<int>& widths() const noexcept { return widths_; }
  int input_dim() const noexcept { return widths_.front(); }
  int output_dim() const noexcept { return widths_.back(); }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  bool all_finite() const;

 private:
  std::vector<int> widths_;
  std::vector<DenseLayer> layers_;
};

Matrix forward(const EmbeddingModel& model, const Matrix& inputs);

struct ModelGradients {
  std::vector<DenseLayer> layers;  // same shapes as the model
  Matrix inputs;
};

/// Reverse-mode gradients of the forward map contracted with grad_embeddings.
ModelGradients backward(const EmbeddingModel& model, const Matrix& inputs, const Matrix& grad_embeddings);

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// g = grad + weight_decay * param; v = momentum * v + g; param -= lr * v.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const SgdConfig& cfg);

/// max(floor, base_lr * decay_factor^floor(epoch / period)).
double lr_schedule(int epoch, double base_lr, double decay_factor, int period, double floor);

/// Classifier weights uniform in +-1/sqrt(dim), zero bias.
ClassifierWeights init_classifier(int classes, int dim, Rng& rng);

struct Checkpoint {
  EmbeddingModel model;
  ClassifierWeights classifier;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dsam
