#pragma once

// PK batch construction: P identities x Q samples each.

#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

namespace dsam {

using Rng = std::mt19937_64;

/// Rows are grouped by class: positions [k*Q, (k+1)*Q) hold class k of the batch.
struct SampledBatch {
  std::vector<std::size_t> indices;  // dataset rows
  std::vector<int> labels;           // label of each slot
  int P = 0;
  int Q = 0;

  std::size_t size() const noexcept { return indices.size(); }
};

/// Throws InvalidBatchShape unless the batch has P distinct labels each
/// repeated Q times (Q >= 2). `dataset_rows`, when nonzero, bounds the indices.
void validate_batch(const SampledBatch& batch, std::size_t dataset_rows = 0);

/// Sets of positives and negatives for one anchor, as batch positions.
struct AnchorPartition {
  std::size_t anchor = 0;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

/// Throws PartitionMismatch when any index is >= batch_size, the anchor
/// appears in its own sets, or the sets overlap.
void validate_partition(const AnchorPartition& partition, std::size_t batch_size);

std::vector<AnchorPartition> build_partitions(std::span<const int> labels);
inline std::vector<AnchorPartition> build_partitions(const SampledBatch& batch) {
  return build_partitions(batch.labels);
}

/// Holds the label -> rows index so repeated draws skip the grouping pass.
class PkSampler {
 public:
  PkSampler(std::span<const int> labels, int P, int Q);

  /// Classes are drawn uniformly without replacement. Rows of a class are
  /// drawn without replacement; a class with fewer than Q rows contributes
  /// every row once and fills the rest uniformly with replacement.
  SampledBatch sample(Rng& rng) const;

  std::size_t class_count() const noexcept { return classes_.size(); }

 private:
  std::vector<int> classes_;
  std::vector<std::vector<std::size_t>> rows_;
  int P_;
  int Q_;
};

SampledBatch pk_sample(std::span<const int> labels, int P, int Q, Rng& rng);

/// ceil(rows / (P * Q)) independent draws make one epoch.
std::size_t steps_per_epoch(std::size_t rows, int P, int Q);

}  // namespace dsam
