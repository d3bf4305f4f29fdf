#include <random>

#include <benchmark/benchmark.h>

#include "dsam/evaluation.hpp"
#include "dsam/losses.hpp"

namespace {

dsam::Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  dsam::Rng rng(seed);
  std::normal_distribution<double> gauss;
  dsam::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  return m;
}

dsam::SampledBatch grouped(int P, int Q) {
  dsam::SampledBatch b;
  b.P = P;
  b.Q = Q;
  for (int i = 0; i < P * Q; ++i) {
    b.indices.push_back(static_cast<std::size_t>(i));
    b.labels.push_back(i / Q);
  }
  return b;
}

void BM_PairwiseAngularD(benchmark::State& state) {
  const dsam::Matrix x = gaussian(state.range(0), 128, 1);
  for (auto _ : state) benchmark::DoNotOptimize(dsam::pairwise_angular_D(x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PairwiseAngularD)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_DsamLoss(benchmark::State& state) {
  const int P = static_cast<int>(state.range(0));
  const dsam::SampledBatch batch = grouped(P, 4);
  const dsam::Matrix x = gaussian(P * 4, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dsam::dsam_loss(x, batch, dsam::DsamConfig{}));
}
BENCHMARK(BM_DsamLoss)->Arg(8)->Arg(16)->Arg(32);

void BM_CombinedArcface(benchmark::State& state) {
  const dsam::SampledBatch batch = grouped(32, 4);
  const dsam::Matrix x = gaussian(128, 128, 3);
  const dsam::ClassifierWeights w{gaussian(500, 128, 4), dsam::Vector()};
  for (auto _ : state) {
    benchmark::DoNotOptimize(dsam::combined_loss(x, w, batch.labels, batch, dsam::BaseLoss::AngularMargin,
                                                 dsam::AngularMarginConfig::arcface(), dsam::DsamConfig{}));
  }
}
BENCHMARK(BM_CombinedArcface);

void BM_Evaluate(benchmark::State& state) {
  const auto n = state.range(0);
  const dsam::Matrix query = gaussian(n / 10, 64, 5);
  const dsam::Matrix gallery = gaussian(n, 64, 6);
  std::vector<int> qlabels(static_cast<std::size_t>(query.rows()));
  std::vector<int> glabels(static_cast<std::size_t>(gallery.rows()));
  for (std::size_t i = 0; i < qlabels.size(); ++i) qlabels[i] = static_cast<int>(i % 20);
  for (std::size_t i = 0; i < glabels.size(); ++i) glabels[i] = static_cast<int>(i % 20);
  for (auto _ : state) benchmark::DoNotOptimize(dsam::evaluate(query, qlabels, gallery, glabels));
}
BENCHMARK(BM_Evaluate)->Arg(1000)->Arg(5000);

}  // namespace
BENCHMARK_MAIN();
