#pragma once

// Cosine-distance retrieval metrics (mAP, CMC) and angular geometry
// diagnostics of an embedding.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsam/dataset.hpp"
#include "dsam/losses.hpp"
#include "dsam/numerics.hpp"

namespace dsam {

struct RetrievalReport {
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[n - 1] = CMC at rank n
  std::vector<double> per_query_ap;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::size_t evaluated_queries = 0;
  std::size_t skipped_queries = 0;  // no same-label gallery item

  double cmc_at(std::size_t rank) const;
  std::string to_json() const;
};

/// Gallery indices by descending cosine similarity; ties go to the lower index.
std::vector<std::size_t> rank_gallery(const Vector& query, const Matrix& gallery);

/// Mean over relevant positions k of (relevant in top k) / k.
double average_precision(const std::vector<bool>& relevant);

/// Queries whose label is absent from the gallery are skipped and counted.
RetrievalReport evaluate(const Matrix& query, std::span<const int> query_labels, const Matrix& gallery,
                         std::span<const int> gallery_labels, std::size_t max_rank = 20);

struct MarginDiagnostics {
  double mean_intraclass_angle = 0.0;   // radians, mean over same-class pairs
  double min_interclass_gap = 0.0;      // radians, closest cross-class pair
  double margin_satisfaction = 0.0;     // fraction of (anchor, negative) pairs with D_an - max D_ap >= m_neg
  std::optional<double> spread_reduction;  // 1 - intra / reference intra
  std::size_t samples_used = 0;
};

inline constexpr std::size_t kDiagnosticsSampleCap = 10000;

/// Exact over all pairs up to kDiagnosticsSampleCap samples; above that a
/// seeded uniform subsample of that size is used.
MarginDiagnostics margin_diagnostics(const Matrix& embeddings, std::span<const int> labels, const DsamConfig& cfg,
                                     std::uint64_t seed = 0);

/// Fills `spread_reduction` of `run` relative to `reference`.
void attach_spread_reduction(MarginDiagnostics& run, const MarginDiagnostics& reference);

}  // namespace dsam
