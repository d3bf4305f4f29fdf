#include "dsam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "../common/naive_retrieval.hpp"
#include "dsam/errors.hpp"

namespace dsam {
namespace {

TEST(RankGallery, SelfRanksFirst) {
  Matrix gallery(4, 3);
  gallery << 1, 0, 0, 0.3, 0.4, 0.5, 0, 1, 0, -1, 2, 0.1;
  for (Eigen::Index i = 0; i < gallery.rows(); ++i) {
    EXPECT_EQ(rank_gallery(gallery.row(i).transpose(), gallery).front(), static_cast<std::size_t>(i));
  }
}

TEST(RankGallery, MonotoneAngles) {
  Matrix gallery(3, 2);
  gallery << 1, 0.01, 0, 1, -1, 0;
  EXPECT_EQ(rank_gallery(Vector{{1.0, 0.0}}, gallery), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(RankGallery, TiesGoToLowerIndex) {
  Matrix gallery(3, 2);
  gallery << 0, 1, 2, 0, 1, 0;
  EXPECT_EQ(rank_gallery(Vector{{1.0, 0.0}}, gallery), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(RankGallery, MatchesFullSortOracle) {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = naive::random_instance(rng);
    const Vector q = inst.query.row(0).transpose();
    std::vector<std::pair<double, std::size_t>> scored;
    for (Eigen::Index g = 0; g < inst.gallery.rows(); ++g) {
      scored.emplace_back(-naive::cosine(inst.query, 0, inst.gallery, g), static_cast<std::size_t>(g));
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::size_t> expected;
    for (const auto& s : scored) expected.push_back(s.second);
    EXPECT_EQ(rank_gallery(q, inst.gallery), expected);
  }
}

TEST(RankGallery, InvariantUnderRowRescaling) {
  Rng rng(42);
  std::uniform_real_distribution<double> scale(0.001, 1000.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = naive::random_instance(rng);
    Matrix scaled = inst.gallery;
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) *= scale(rng);
    const Vector q = inst.query.row(0).transpose();
    EXPECT_EQ(rank_gallery(q, inst.gallery), rank_gallery(q, scaled));
  }
}

TEST(AveragePrecision, SpotValues) {
  EXPECT_EQ(average_precision({true, true, true, false}), 1.0);
  EXPECT_NEAR(average_precision({true, false, true, false}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(average_precision({true, false, true, false}), 0.833333333, 1e-9);
  for (std::size_t r = 1; r <= 6; ++r) {
    std::vector<bool> flags(6, false);
    flags[r - 1] = true;
    EXPECT_DOUBLE_EQ(average_precision(flags), 1.0 / static_cast<double>(r));
  }
  try {
    average_precision({false, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoRelevantItems);
  }
}

TEST(Evaluate, SelfRetrievalIsPerfect) {
  Rng rng(43);
  Matrix x(12, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::normal_distribution<double>()(rng);
  std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  const RetrievalReport r = evaluate(x, labels, x, labels);
  EXPECT_EQ(r.cmc_at(1), 1.0);
  // Self-matches rank first, so every AP is at least 1/1 on its first hit;
  // perfect mAP needs each class to be tight, which holds for one-point classes.
  Matrix points(3, 2);
  points << 1, 0, 0, 1, -1, -1;
  const std::vector<int> one{0, 1, 2};
  const RetrievalReport p = evaluate(points, one, points, one);
  EXPECT_EQ(p.mAP, 1.0);
  EXPECT_EQ(p.cmc_at(1), 1.0);
}

TEST(Evaluate, HandEnumeratedInstance) {
  Matrix query(3, 2);
  query << 1, 0, 0, 1, 1, 1;
  const std::vector<int> qlabels{0, 1, 0};
  Matrix gallery(6, 2);
  gallery << 1, 0.1, 0.2, 1, 1, 0.9, 0.9, 1, -1, 0.2, 0.1, -1;
  const std::vector<int> glabels{0, 1, 1, 0, 0, 1};
  EXPECT_EQ(rank_gallery(query.row(0).transpose(), gallery), (std::vector<std::size_t>{0, 2, 3, 1, 5, 4}));
  EXPECT_EQ(rank_gallery(query.row(1).transpose(), gallery), (std::vector<std::size_t>{1, 3, 2, 4, 0, 5}));
  EXPECT_EQ(rank_gallery(query.row(2).transpose(), gallery), (std::vector<std::size_t>{2, 3, 1, 0, 4, 5}));

  const RetrievalReport r = evaluate(query, qlabels, gallery, glabels);
  ASSERT_EQ(r.per_query_ap.size(), 3U);
  EXPECT_NEAR(r.per_query_ap[0], (1.0 + 2.0 / 3.0 + 3.0 / 6.0) / 3.0, 1e-15);
  EXPECT_NEAR(r.per_query_ap[1], (1.0 + 2.0 / 3.0 + 3.0 / 6.0) / 3.0, 1e-15);
  EXPECT_NEAR(r.per_query_ap[2], (1.0 / 2.0 + 2.0 / 4.0 + 3.0 / 5.0) / 3.0, 1e-15);
  EXPECT_NEAR(r.mAP, 0.65925925925925932, 1e-15);
  ASSERT_EQ(r.cmc.size(), 6U);
  EXPECT_NEAR(r.cmc[0], 2.0 / 3.0, 1e-15);
  for (std::size_t k = 1; k < 6; ++k) EXPECT_EQ(r.cmc[k], 1.0);
}

TEST(Evaluate, MatchesNaiveReferenceExactly) {
  Rng rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = naive::random_instance(rng);
    const RetrievalReport r = evaluate(inst.query, inst.qlabels, inst.gallery, inst.glabels, 20);
    const naive::Metrics m = naive::retrieval(inst.query, inst.qlabels, inst.gallery, inst.glabels, 20);
    EXPECT_EQ(r.mAP, m.mAP) << "trial " << trial;
    EXPECT_EQ(r.cmc, m.cmc) << "trial " << trial;
    EXPECT_EQ(r.per_query_ap, m.aps) << "trial " << trial;
    EXPECT_EQ(r.skipped_queries, m.skipped);
  }
}

TEST(Evaluate, CmcIsNonDecreasingAndEndsAtOne) {
  Rng rng(45);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = naive::random_instance(rng);
    const RetrievalReport r = evaluate(inst.query, inst.qlabels, inst.gallery, inst.glabels, 1000);
    EXPECT_TRUE(std::is_sorted(r.cmc.begin(), r.cmc.end()));
    EXPECT_EQ(r.cmc.back(), 1.0);
    EXPECT_NEAR(r.mAP, std::accumulate(r.per_query_ap.begin(), r.per_query_ap.end(), 0.0) / r.per_query_ap.size(),
                1e-15);
  }
}

TEST(Evaluate, MapInvariantUnderGalleryPermutation) {
  Rng rng(46);
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = naive::random_instance(rng);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(inst.gallery.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix gallery(inst.gallery.rows(), inst.gallery.cols());
    std::vector<int> labels;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      gallery.row(static_cast<Eigen::Index>(i)) = inst.gallery.row(perm[i]);
      labels.push_back(inst.glabels[static_cast<std::size_t>(perm[i])]);
    }
    const double a = evaluate(inst.query, inst.qlabels, inst.gallery, inst.glabels).mAP;
    const double b = evaluate(inst.query, inst.qlabels, gallery, labels).mAP;
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(Evaluate, SkipsQueriesWithoutMatch) {
  Matrix query(2, 2);
  query << 1, 0, 0, 1;
  Matrix gallery(2, 2);
  gallery << 1, 0.1, 0.1, 1;
  const std::vector<int> qlabels{0, 7};
  const std::vector<int> glabels{0, 1};
  const RetrievalReport r = evaluate(query, qlabels, gallery, glabels);
  EXPECT_EQ(r.skipped_queries, 1U);
  EXPECT_EQ(r.evaluated_queries, 1U);
  EXPECT_EQ(r.mAP, 1.0);
}

TEST(Evaluate, Errors) {
  const std::vector<int> none;
  const std::vector<int> one{0};
  EXPECT_THROW(evaluate(Matrix(0, 2), none, Matrix::Ones(1, 2), one), Error);
  EXPECT_THROW(evaluate(Matrix::Ones(1, 2), one, Matrix::Ones(1, 3), one), Error);
  const std::vector<int> two{0, 0};
  EXPECT_THROW(evaluate(Matrix::Ones(1, 2), two, Matrix::Ones(1, 2), one), Error);
}

TEST(RetrievalReport, JsonSchema) {
  Matrix x(4, 2);
  x << 1, 0, 0.9, 0.1, 0, 1, 0.1, 0.9;
  const std::vector<int> labels{0, 0, 1, 1};
  const auto j = nlohmann::json::parse(evaluate(x, labels, x, labels, 3).to_json());
  for (const char* key :
       {"mAP", "cmc", "per_query_ap", "query_count", "gallery_count", "evaluated_queries", "skipped_queries"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["cmc"].size(), 3U);
  EXPECT_EQ(j["query_count"], 4);
}

TEST(MarginDiagnostics, CollapsedClasses) {
  Matrix x(6, 2);
  x << 1, 0, 3, 0,  // class 0 at 0 degrees
      0, 2, 0, 5,   // class 1 at 90 degrees
      -1, 0, -4, 0; // class 2 at 180 degrees
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const MarginDiagnostics d = margin_diagnostics(x, labels, DsamConfig{});
  EXPECT_EQ(d.mean_intraclass_angle, 0.0);
  EXPECT_NEAR(d.min_interclass_gap, std::numbers::pi / 2, 1e-12);
  EXPECT_EQ(d.margin_satisfaction, 1.0);
  // With a margin above e^2 - 1, the 90-degree pairs fail and only the
  // 180-degree pairs (D = e^4 - 1) survive: 2 of 4 per anchor of classes 0 and 2.
  const MarginDiagnostics wide = margin_diagnostics(x, labels, DsamConfig{10.0, 0.8, 0.05});
  EXPECT_NEAR(wide.margin_satisfaction, 8.0 / 24.0, 1e-15);
}

TEST(MarginDiagnostics, OrthogonalTightClusters) {
  Rng rng(47);
  std::normal_distribution<double> noise(0.0, 1e-3);
  Matrix x(40, 2);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < 40; ++i) {
    const int k = static_cast<int>(i % 2);
    x(i, 0) = (k == 0 ? 1.0 : 0.0) + noise(rng);
    x(i, 1) = (k == 1 ? 1.0 : 0.0) + noise(rng);
    labels.push_back(k);
  }
  const MarginDiagnostics d = margin_diagnostics(x, labels, DsamConfig{0.9, 0.8, 0.05});
  EXPECT_EQ(d.margin_satisfaction, 1.0);
  EXPECT_LT(d.mean_intraclass_angle, 0.01);
  EXPECT_GT(d.min_interclass_gap, 1.5);
}

TEST(MarginDiagnostics, PermutationInvariant) {
  Rng rng(48);
  std::normal_distribution<double> gauss;
  Matrix x(30, 3);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  for (int i = 0; i < 30; ++i) labels.push_back(i % 4);
  std::vector<Eigen::Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix y(30, 3);
  std::vector<int> ylabels;
  for (std::size_t i = 0; i < 30; ++i) {
    y.row(static_cast<Eigen::Index>(i)) = x.row(perm[i]);
    ylabels.push_back(labels[static_cast<std::size_t>(perm[i])]);
  }
  const MarginDiagnostics a = margin_diagnostics(x, labels, DsamConfig{});
  const MarginDiagnostics b = margin_diagnostics(y, ylabels, DsamConfig{});
  EXPECT_NEAR(a.mean_intraclass_angle, b.mean_intraclass_angle, 1e-12);
  EXPECT_EQ(a.min_interclass_gap, b.min_interclass_gap);
  EXPECT_EQ(a.margin_satisfaction, b.margin_satisfaction);
  EXPECT_GE(a.min_interclass_gap, 0.0);
  EXPECT_LE(a.mean_intraclass_angle, std::numbers::pi);
}

TEST(MarginDiagnostics, SubsamplesLargeInputs) {
  Rng rng(49);
  std::normal_distribution<double> gauss;
  const Eigen::Index n = static_cast<Eigen::Index>(kDiagnosticsSampleCap) + 500;
  Matrix x(n, 2);
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
  for (Eigen::Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % 3));
  const MarginDiagnostics a = margin_diagnostics(x, labels, DsamConfig{}, 5);
  EXPECT_EQ(a.samples_used, kDiagnosticsSampleCap);
  EXPECT_GT(a.mean_intraclass_angle, 0.0);
}

TEST(MarginDiagnostics, SpreadReduction) {
  MarginDiagnostics ref;
  ref.mean_intraclass_angle = 0.4;
  MarginDiagnostics run;
  run.mean_intraclass_angle = 0.1;
  attach_spread_reduction(run, ref);
  ASSERT_TRUE(run.spread_reduction.has_value());
  EXPECT_NEAR(*run.spread_reduction, 0.75, 1e-15);
}

TEST(MarginDiagnostics, RejectsSingleClass) {
  const std::vector<int> labels{0, 0};
  EXPECT_THROW(margin_diagnostics(Matrix::Ones(2, 2), labels, DsamConfig{}), Error);
  Matrix zero = Matrix::Ones(3, 2);
  zero.row(2).setZero();
  const std::vector<int> three{0, 0, 1};
  EXPECT_THROW(margin_diagnostics(zero, three, DsamConfig{}), Error);
}

}  // namespace
}  // namespace dsam
