#include "dsam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "dsam/errors.hpp"

namespace dsam {

double RetrievalReport::cmc_at(std::size_t rank) const {
  if (cmc.empty() || rank == 0) return 0.0;
  return cmc[std::min(rank, cmc.size()) - 1];
}

std::string RetrievalReport::to_json() const {
  nlohmann::json j;
  j["mAP"] = mAP;
  j["cmc"] = cmc;
  j["per_query_ap"] = per_query_ap;
  j["query_count"] = query_count;
  j["gallery_count"] = gallery_count;
  j["evaluated_queries"] = evaluated_queries;
  j["skipped_queries"] = skipped_queries;
  return j.dump(2);
}

namespace {

std::vector<std::size_t> rank_by_similarity(const Vector& sims) {
  std::vector<std::size_t> order(static_cast<std::size_t>(sims.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = sims(static_cast<Eigen::Index>(a));
    const double sb = sims(static_cast<Eigen::Index>(b));
    return sa > sb || (sa == sb && a < b);
  });
  return order;
}

}  // namespace

std::vector<std::size_t> rank_gallery(const Vector& query, const Matrix& gallery) {
  if (query.size() != gallery.cols()) fail(ErrorCode::DimensionMismatch, "query and gallery widths differ");
  const Vector q = l2_normalize(query);
  const UnitFeatureMatrix g(gallery);
  return rank_by_similarity(g.rows() * q);
}

double average_precision(const std::vector<bool>& relevant) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < relevant.size(); ++k) {
    if (!relevant[k]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) fail(ErrorCode::NoRelevantItems, "ranking holds no relevant item");
  return sum / static_cast<double>(hits);
}

RetrievalReport evaluate(const Matrix& query, std::span<const int> query_labels, const Matrix& gallery,
                         std::span<const int> gallery_labels, std::size_t max_rank) {
  if (query.rows() == 0 || query_labels.empty()) fail(ErrorCode::EmptyQuerySet, "no queries to evaluate");
  if (static_cast<std::size_t>(query.rows()) != query_labels.size() ||
      static_cast<std::size_t>(gallery.rows()) != gallery_labels.size()) {
    fail(ErrorCode::DimensionMismatch, "labels do not match embedding rows");
  }
  if (query.cols() != gallery.cols()) fail(ErrorCode::DimensionMismatch, "query and gallery widths differ");

  const UnitFeatureMatrix q(query);
  const UnitFeatureMatrix g(gallery);
  const Matrix sims = q.rows() * g.rows().transpose();
  const std::set<int> gallery_set(gallery_labels.begin(), gallery_labels.end());

  RetrievalReport report;
  report.query_count = query_labels.size();
  report.gallery_count = gallery_labels.size();
  const std::size_t ranks = std::min<std::size_t>(max_rank, gallery_labels.size());
  std::vector<std::size_t> first_hit_counts(ranks, 0);

  for (std::size_t i = 0; i < query_labels.size(); ++i) {
    if (!gallery_set.contains(query_labels[i])) {
      ++report.skipped_queries;
      continue;
    }
    const auto order = rank_by_similarity(sims.row(static_cast<Eigen::Index>(i)).transpose());
    std::vector<bool> relevant(order.size());
    std::size_t first_hit = order.size();
    for (std::size_t k = 0; k < order.size(); ++k) {
      relevant[k] = gallery_labels[order[k]] == query_labels[i];
      if (relevant[k] && first_hit == order.size()) first_hit = k;
    }
    report.per_query_ap.push_back(average_precision(relevant));
    if (first_hit < ranks) ++first_hit_counts[first_hit];
  }
  report.evaluated_queries = report.per_query_ap.size();
  if (report.evaluated_queries == 0) return report;

  const auto n = static_cast<double>(report.evaluated_queries);
  double ap_sum = 0.0;
  for (double ap : report.per_query_ap) ap_sum += ap;
  report.mAP = ap_sum / n;
  report.cmc.resize(ranks);
  std::size_t cumulative = 0;
  for (std::size_t r = 0; r < ranks; ++r) {
    cumulative += first_hit_counts[r];
    report.cmc[r] = static_cast<double>(cumulative) / n;
  }
  return report;
}

MarginDiagnostics margin_diagnostics(const Matrix& embeddings, std::span<const int> labels, const DsamConfig& cfg,
                                     std::uint64_t seed) {
  validate_features(embeddings);
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "labels do not match embedding rows");
  }
  std::vector<std::size_t> rows(labels.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (rows.size() > kDiagnosticsSampleCap) {
    Rng rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(kDiagnosticsSampleCap);
    std::sort(rows.begin(), rows.end());
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix sample(n, embeddings.cols());
  std::vector<int> sample_labels(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    sample.row(i) = embeddings.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
    sample_labels[static_cast<std::size_t>(i)] = labels[rows[static_cast<std::size_t>(i)]];
  }
  const std::set<int> classes(sample_labels.begin(), sample_labels.end());
  if (classes.size() < 2) fail(ErrorCode::InvalidConfig, "margin diagnostics need at least 2 classes");

  const Matrix cos = pairwise_cosine(UnitFeatureMatrix(sample));

  MarginDiagnostics out;
  out.samples_used = rows.size();
  double intra_sum = 0.0;
  std::size_t intra_pairs = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  std::size_t satisfied = 0;
  std::size_t anchor_negative_pairs = 0;
  std::vector<double> hardest(rows.size(), -1.0);

  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double angle = std::acos(cos(a, b));
      if (sample_labels[static_cast<std::size_t>(a)] == sample_labels[static_cast<std::size_t>(b)]) {
        intra_sum += angle;
        ++intra_pairs;
        const double d = angular_difference(cos(a, b));
        hardest[static_cast<std::size_t>(a)] = std::max(hardest[static_cast<std::size_t>(a)], d);
        hardest[static_cast<std::size_t>(b)] = std::max(hardest[static_cast<std::size_t>(b)], d);
      } else {
        min_gap = std::min(min_gap, angle);
      }
    }
  }
  for (Eigen::Index a = 0; a < n; ++a) {
    const double hp = hardest[static_cast<std::size_t>(a)];
    if (hp < 0.0) continue;  // no positive for this anchor
    for (Eigen::Index i = 0; i < n; ++i) {
      if (sample_labels[static_cast<std::size_t>(i)] == sample_labels[static_cast<std::size_t>(a)]) continue;
      ++anchor_negative_pairs;
      if (angular_difference(cos(a, i)) - hp >= cfg.m_neg) ++satisfied;
    }
  }
  if (intra_pairs == 0) fail(ErrorCode::InvalidConfig, "margin diagnostics need a class with >= 2 samples");

  out.mean_intraclass_angle = intra_sum / static_cast<double>(intra_pairs);
  out.min_interclass_gap = min_gap;
  out.margin_satisfaction =
      anchor_negative_pairs == 0 ? 0.0 : static_cast<double>(satisfied) / static_cast<double>(anchor_negative_pairs);
  return out;
}

void attach_spread_reduction(MarginDiagnostics& run, const MarginDiagnostics& reference) {
  if (reference.mean_intraclass_angle > 0.0) {
    run.spread_reduction = 1.0 - run.mean_intraclass_angle / reference.mean_intraclass_angle;
  } else {
    run.spread_reduction = 0.0;
  }
}

}  // namespace dsam
