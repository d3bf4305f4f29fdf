#include "dsam/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dsam/errors.hpp"

namespace dsam {

void validate_batch(const SampledBatch& batch, std::size_t dataset_rows) {
  if (batch.Q < 2) fail(ErrorCode::InvalidBatchShape, "Q must be at least 2, got " + std::to_string(batch.Q));
  if (batch.P < 1) fail(ErrorCode::InvalidBatchShape, "P must be positive");
  const auto expected = static_cast<std::size_t>(batch.P) * static_cast<std::size_t>(batch.Q);
  if (batch.indices.size() != expected || batch.labels.size() != expected) {
    fail(ErrorCode::InvalidBatchShape, "batch must hold P*Q = " + std::to_string(expected) + " entries");
  }
  std::map<int, int> counts;
  for (int label : batch.labels) ++counts[label];
  if (counts.size() != static_cast<std::size_t>(batch.P)) {
    fail(ErrorCode::InvalidBatchShape, "batch holds " + std::to_string(counts.size()) + " labels, expected P");
  }
  for (const auto& [label, count] : counts) {
    if (count != batch.Q) {
      fail(ErrorCode::InvalidBatchShape, "label " + std::to_string(label) + " appears " + std::to_string(count) +
                                             " times, expected Q = " + std::to_string(batch.Q));
    }
  }
  if (dataset_rows != 0) {
    for (std::size_t index : batch.indices) {
      if (index >= dataset_rows) fail(ErrorCode::InvalidBatchShape, "batch index out of dataset range");
    }
  }
}

void validate_partition(const AnchorPartition& partition, std::size_t batch_size) {
  std::vector<char> seen(batch_size, 0);
  if (partition.anchor >= batch_size) fail(ErrorCode::PartitionMismatch, "anchor index out of range");
  seen[partition.anchor] = 1;
  auto mark = [&](std::size_t index) {
    if (index >= batch_size) fail(ErrorCode::PartitionMismatch, "partition index out of range");
    if (seen[index]) fail(ErrorCode::PartitionMismatch, "partition index " + std::to_string(index) + " repeated");
    seen[index] = 1;
  };
  for (std::size_t i : partition.positives) mark(i);
  for (std::size_t i : partition.negatives) mark(i);
}

std::vector<AnchorPartition> build_partitions(std::span<const int> labels) {
  std::vector<AnchorPartition> out(labels.size());
  for (std::size_t a = 0; a < labels.size(); ++a) {
    out[a].anchor = a;
    for (std::size_t z = 0; z < labels.size(); ++z) {
      if (z == a) continue;
      (labels[z] == labels[a] ? out[a].positives : out[a].negatives).push_back(z);
    }
  }
  return out;
}

PkSampler::PkSampler(std::span<const int> labels, int P, int Q) : P_(P), Q_(Q) {
  if (Q < 2) fail(ErrorCode::InvalidQ, "Q must be at least 2, got " + std::to_string(Q));
  if (P < 1) fail(ErrorCode::InsufficientClasses, "P must be positive");
  std::map<int, std::vector<std::size_t>> grouped;
  for (std::size_t i = 0; i < labels.size(); ++i) grouped[labels[i]].push_back(i);
  if (grouped.size() < static_cast<std::size_t>(P)) {
    fail(ErrorCode::InsufficientClasses,
         "dataset has " + std::to_string(grouped.size()) + " classes, P = " + std::to_string(P));
  }
  for (auto& [label, rows] : grouped) {
    classes_.push_back(label);
    rows_.push_back(std::move(rows));
  }
}

SampledBatch PkSampler::sample(Rng& rng) const {
  SampledBatch batch;
  batch.P = P_;
  batch.Q = Q_;
  const auto q = static_cast<std::size_t>(Q_);
  batch.indices.reserve(static_cast<std::size_t>(P_) * q);
  batch.labels.reserve(static_cast<std::size_t>(P_) * q);

  // Partial Fisher-Yates: the first P slots are a uniform draw without replacement.
  std::vector<std::size_t> order(classes_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < static_cast<std::size_t>(P_); ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, order.size() - 1);
    std::swap(order[k], order[pick(rng)]);
  }

  for (std::size_t k = 0; k < static_cast<std::size_t>(P_); ++k) {
    const auto& rows = rows_[order[k]];
    std::vector<std::size_t> chosen;
    if (rows.size() >= q) {
      std::vector<std::size_t> pool = rows;
      for (std::size_t t = 0; t < q; ++t) {
        std::uniform_int_distribution<std::size_t> pick(t, pool.size() - 1);
        std::swap(pool[t], pool[pick(rng)]);
      }
      chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(q));
    } else {
      chosen = rows;
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      while (chosen.size() < q) chosen.push_back(rows[pick(rng)]);
      std::shuffle(chosen.begin(), chosen.end(), rng);
    }
    for (std::size_t row : chosen) {
      batch.indices.push_back(row);
      batch.labels.push_back(classes_[order[k]]);
    }
  }
  return batch;
}

SampledBatch pk_sample(std::span<const int> labels, int P, int Q, Rng& rng) {
  return PkSampler(labels, P, Q).sample(rng);
}

std::size_t steps_per_epoch(std::size_t rows, int P, int Q) {
  const auto per_batch = static_cast<std::size_t>(P) * static_cast<std::size_t>(Q);
  return (rows + per_batch - 1) / per_batch;
}

}  // namespace dsam
