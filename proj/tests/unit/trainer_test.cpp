#include "dsam/trainer.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "dsam/evaluation.hpp"

namespace dsam {
namespace {

LabeledDataset toy_dataset(int classes = 8, int per_class = 200, std::uint64_t seed = 11) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.samples_per_class = per_class;
  spec.seed = seed;
  return generate_synthetic(spec);
}

TEST(BaseLossNames, RoundTrip) {
  for (BaseLoss b : {BaseLoss::Softmax, BaseLoss::NormalizedSoftmax, BaseLoss::AngularMargin}) {
    EXPECT_EQ(base_loss_from_string(to_string(b)), b);
  }
  EXPECT_THROW(base_loss_from_string("center"), Error);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.Q = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Train, ZeroEpochsRejected) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(toy_dataset(2, 20), cfg), Error);
}

TEST(Train, SingleEpochOnTwoClassesStaysFinite) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.P = 2;
  cfg.Q = 4;
  cfg.use_dsam = true;
  const TrainResult r = train(toy_dataset(2, 20), cfg);
  ASSERT_FALSE(r.log.steps.empty());
  EXPECT_EQ(r.log.steps.size(), steps_per_epoch(40, 2, 4));
  for (const auto& s : r.log.steps) EXPECT_TRUE(std::isfinite(s.loss));
  EXPECT_EQ(r.log.epochs.size(), 1U);
  EXPECT_TRUE(r.model.all_finite());
}

TEST(Train, SameSeedGivesIdenticalLog) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.use_dsam = true;
  const LabeledDataset ds = toy_dataset(8, 40);
  std::ostringstream a;
  std::ostringstream b;
  train(ds, cfg).log.write_jsonl(a);
  train(ds, cfg).log.write_jsonl(b);
  EXPECT_EQ(a.str(), b.str());
  cfg.seed = 2;
  std::ostringstream c;
  train(ds, cfg).log.write_jsonl(c);
  EXPECT_NE(a.str(), c.str());
}

struct LossSetup {
  const char* name;
  BaseLoss base;
  bool dsam;
  bool triplet;
};

void PrintTo(const LossSetup& setup, std::ostream* os) { *os << setup.name; }

class EpochMeanDecreases : public ::testing::TestWithParam<LossSetup> {};

TEST_P(EpochMeanDecreases, BetweenEpochZeroAndFive) {
  const LossSetup setup = GetParam();
  TrainConfig cfg;
  cfg.base = setup.base;
  cfg.use_dsam = setup.dsam;
  cfg.use_triplet = setup.triplet;
  cfg.epochs = 6;
  const TrainResult r = train(toy_dataset(), cfg);
  for (const auto& s : r.log.steps) {
    if (s.epoch == 0) {
      EXPECT_TRUE(std::isfinite(s.loss));
    }
  }
  ASSERT_EQ(r.log.epochs.size(), 6U);
  EXPECT_LT(r.log.epochs[5].mean_loss, r.log.epochs[0].mean_loss);
}

INSTANTIATE_TEST_SUITE_P(
    AllConfigurations, EpochMeanDecreases,
    ::testing::Values(LossSetup{"softmax", BaseLoss::Softmax, false, false},
                      LossSetup{"softmax_dsam", BaseLoss::Softmax, true, false},
                      LossSetup{"normalized", BaseLoss::NormalizedSoftmax, false, false},
                      LossSetup{"normalized_dsam", BaseLoss::NormalizedSoftmax, true, false},
                      LossSetup{"angular_margin", BaseLoss::AngularMargin, false, false},
                      LossSetup{"angular_margin_dsam", BaseLoss::AngularMargin, true, false},
                      LossSetup{"softmax_triplet", BaseLoss::Softmax, false, true}),
    [](const ::testing::TestParamInfo<LossSetup>& info) { return std::string(info.param.name); });

TEST(Train, DsamShrinksIntraclassAngleOverTraining) {
  const LabeledDataset ds = toy_dataset();
  TrainConfig cfg;
  cfg.use_dsam = true;
  cfg.epochs = 30;
  std::vector<double> intra;
  train(ds, cfg, [&](int, const EmbeddingModel& model, const ClassifierWeights&) {
    const MarginDiagnostics d = margin_diagnostics(forward(model, ds.features), ds.labels, cfg.dsam);
    intra.push_back(d.mean_intraclass_angle);
    return std::map<std::string, double>{{"intra", d.mean_intraclass_angle}};
  });
  ASSERT_EQ(intra.size(), 30U);
  EXPECT_LT(intra.back(), intra.front());
}

TEST(Train, HookSummaryLandsInLog) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.P = 4;
  const TrainResult r = train(toy_dataset(4, 20), cfg, [](int epoch, const EmbeddingModel&, const ClassifierWeights&) {
    return std::map<std::string, double>{{"epoch_twice", 2.0 * epoch}};
  });
  EXPECT_EQ(r.log.epochs[1].summary.at("epoch_twice"), 2.0);
  std::ostringstream out;
  r.log.write_jsonl(out);
  EXPECT_NE(out.str().find("\"epoch_twice\""), std::string::npos);
}

TEST(Train, DivergenceAbortsWithStep) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 1e6;
  cfg.momentum = 0.0;
  cfg.use_dsam = true;
  cfg.P = 4;
  try {
    train(toy_dataset(4, 40), cfg);
    FAIL() << "expected a numerical abort";
  } catch (const NonFiniteLossError& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("step " + std::to_string(e.step())), std::string::npos);
  }
}

TEST(BatchLoss, TripletAddsOnTop) {
  const LabeledDataset ds = toy_dataset(4, 10);
  Rng rng(3);
  const SampledBatch batch = pk_sample(ds.labels, 2, 3, rng);
  Matrix emb(6, 2);
  emb << 1, 0, 0.9, 0.2, 1.1, -0.1, 0, 1, 0.1, 0.8, -0.2, 1.2;
  ClassifierWeights w{Matrix::Identity(4, 2), Vector::Zero(4)};
  TrainConfig cfg;
  const LossResult plain = batch_loss(emb, w, batch, cfg);
  cfg.use_triplet = true;
  cfg.triplet_margin = 1.0;
  const LossResult with = batch_loss(emb, w, batch, cfg);
  EXPECT_DOUBLE_EQ(with.value, plain.value + with.diagnostics.at("triplet.value"));
}

}  // namespace
}  // namespace dsam
