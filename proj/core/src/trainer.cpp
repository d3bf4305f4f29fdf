#include "dsam/trainer.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "dsam/errors.hpp"

namespace dsam {

std::string to_string(BaseLoss base) {
  switch (base) {
    case BaseLoss::Softmax: return "softmax";
    case BaseLoss::NormalizedSoftmax: return "normalized-softmax";
    case BaseLoss::AngularMargin: return "angular-margin";
  }
  return "unknown";
}

BaseLoss base_loss_from_string(const std::string& name) {
  if (name == "softmax") return BaseLoss::Softmax;
  if (name == "normalized-softmax") return BaseLoss::NormalizedSoftmax;
  if (name == "angular-margin") return BaseLoss::AngularMargin;
  fail(ErrorCode::InvalidConfig, "train.base must be softmax, normalized-softmax or angular-margin, got '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) fail(ErrorCode::InvalidConfig, "train.lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorCode::InvalidConfig, "train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) fail(ErrorCode::InvalidConfig, "train.weight_decay must be >= 0");
  if (epochs < 1) fail(ErrorCode::InvalidConfig, "train.epochs must be >= 1");
  if (P < 1) fail(ErrorCode::InvalidConfig, "train.P must be >= 1");
  if (Q < 2) fail(ErrorCode::InvalidConfig, "train.Q must be >= 2");
  if (embedding_dim < 1) fail(ErrorCode::InvalidConfig, "train.embedding_dim must be >= 1");
  if (lr_period < 1) fail(ErrorCode::InvalidConfig, "train.lr_period must be >= 1");
  if (!(lr_decay > 0.0)) fail(ErrorCode::InvalidConfig, "train.lr_decay must be > 0");
  if (!(triplet_margin >= 0.0)) fail(ErrorCode::InvalidConfig, "train.triplet_margin must be >= 0");
  for (int w : hidden) {
    if (w < 1) fail(ErrorCode::InvalidConfig, "train.hidden widths must be positive");
  }
  dsam.validate();
  angular.validate();
}

void MetricsLog::write_jsonl(std::ostream& out) const {
  for (const auto& s : steps) {
    nlohmann::json j{{"type", "step"}, {"seed", seed}, {"step", s.step},
                     {"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}};
    j["diagnostics"] = s.diagnostics;
    out << j.dump() << '\n';
  }
  for (const auto& e : epochs) {
    nlohmann::json j{{"type", "epoch"}, {"seed", seed}, {"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
    j["summary"] = e.summary;
    out << j.dump() << '\n';
  }
}

NonFiniteLossError::NonFiniteLossError(std::size_t step, const std::string& message)
    : Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(step) + ": " + message), step_(step) {}

LossResult batch_loss(const Matrix& embeddings, const ClassifierWeights& classifier, const SampledBatch& batch,
                      const TrainConfig& config) {
  LossResult result;
  if (config.use_dsam) {
    result = combined_loss(embeddings, classifier, batch.labels, batch, config.base, config.angular, config.dsam);
  } else if (config.base == BaseLoss::Softmax) {
    result = softmax_ce(embeddings, classifier, batch.labels);
  } else {
    const AngularMarginConfig cfg = config.base == BaseLoss::AngularMargin
                                        ? config.angular
                                        : AngularMarginConfig::normalized_softmax(config.angular.s);
    result = angular_margin_ce(embeddings, classifier, batch.labels, cfg);
  }
  if (config.use_triplet) {
    const LossResult triplet = triplet_batch_hard(embeddings, batch, config.triplet_margin);
    result.value += triplet.value;
    result.grad_features += triplet.grad_features;
    for (const auto& [key, v] : triplet.diagnostics) result.diagnostics["triplet." + key] = v;
    result.diagnostics["triplet.value"] = triplet.value;
  }
  return result;
}

namespace {

template <typename Derived>
std::span<double> span_of(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <typename Derived>
std::span<const double> span_of(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

TrainResult train(const LabeledDataset& dataset, const TrainConfig& config, const EpochHook& hook) {
  config.validate();
  validate_dataset(dataset);

  Rng rng(config.seed);
  std::vector<int> widths{static_cast<int>(dataset.features.cols())};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.embedding_dim);

  TrainResult result{EmbeddingModel(widths, rng), init_classifier(dataset.class_count(), config.embedding_dim, rng),
                     MetricsLog{}};
  result.log.seed = config.seed;
  EmbeddingModel& model = result.model;
  ClassifierWeights& classifier = result.classifier;

  std::vector<DenseLayer> velocity;
  for (const auto& layer : model.layers()) {
    velocity.push_back({Matrix::Zero(layer.W.rows(), layer.W.cols()), Vector::Zero(layer.b.size())});
  }
  Matrix classifier_velocity = Matrix::Zero(classifier.W.rows(), classifier.W.cols());
  Vector bias_velocity = Vector::Zero(classifier.bias.size());

  const PkSampler sampler(dataset.labels, config.P, config.Q);
  const std::size_t steps = steps_per_epoch(dataset.size(), config.P, config.Q);
  std::size_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, config.lr, config.lr_decay, config.lr_period, config.lr_floor);
    const SgdConfig with_decay{lr, config.momentum, config.weight_decay};
    const SgdConfig no_decay{lr, config.momentum, 0.0};
    double loss_sum = 0.0;

    for (std::size_t s = 0; s < steps; ++s, ++step) {
      const SampledBatch batch = sampler.sample(rng);
      const LabeledDataset rows = dataset.subset(batch.indices);
      const Matrix embeddings = forward(model, rows.features);
      if (!embeddings.allFinite()) throw NonFiniteLossError(step, "embeddings are not finite");

      const LossResult loss = batch_loss(embeddings, classifier, batch, config);
      if (!std::isfinite(loss.value) || !loss.grad_features.allFinite()) {
        throw NonFiniteLossError(step, "loss value or gradient is not finite");
      }
      ModelGradients grads = backward(model, rows.features, loss.grad_features);

      for (std::size_t k = 0; k < model.layers().size(); ++k) {
        auto& layer = model.layers()[k];
        sgd_step(span_of(layer.W), span_of(grads.layers[k].W), span_of(velocity[k].W), with_decay);
        sgd_step(span_of(layer.b), span_of(grads.layers[k].b), span_of(velocity[k].b), no_decay);
      }
      if (loss.grad_weights) {
        sgd_step(span_of(classifier.W), span_of(*loss.grad_weights), span_of(classifier_velocity), with_decay);
      }
      if (loss.grad_bias) {
        sgd_step(span_of(classifier.bias), span_of(*loss.grad_bias), span_of(bias_velocity), no_decay);
      }
      if (!model.all_finite() || !classifier.W.allFinite() || !classifier.bias.allFinite()) {
        throw NonFiniteLossError(step, "parameters became non-finite");
      }

      loss_sum += loss.value;
      result.log.steps.push_back({step, epoch, lr, loss.value, loss.diagnostics});
    }

    EpochRecord record{epoch, loss_sum / static_cast<double>(steps), {}};
    if (hook) record.summary = hook(epoch, model, classifier);
    result.log.epochs.push_back(std::move(record));
  }
  return result;
}

}  // namespace dsam
