#pragma once

// Synthetic labeled features with multi-modal classes, CSV I/O and
// per-class splitting.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dsam/numerics.hpp"
#include "dsam/sampling.hpp"

namespace dsam {

struct SyntheticSpec {
  int classes = 8;
  int samples_per_class = 200;
  int input_dim = 16;
  double center_scale = 3.0;
  double sigma = 0.5;
  int modes = 3;
  double mode_scale = 1.5;
  bool standardize = true;  // z-score every column after sampling
  std::uint64_t seed = 1;

  void validate() const;
};

struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::int64_t> ids;

  std::size_t size() const noexcept { return labels.size(); }
  int class_count() const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

/// Throws SchemaError unless rows, labels and ids agree and labels are 0..K-1.
void validate_dataset(const LabeledDataset& ds);

/// K x dim matrix of class centers, one row per draw of `normal()` * scale.
/// A row within 1e-9 of an earlier row is redrawn.
Matrix draw_class_centers(int classes, int dim, double scale, const std::function<double()>& normal);

LabeledDataset generate_synthetic(const SyntheticSpec& spec);

/// Header `id,label,f0,...`; values written with 17 significant digits.
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path, const std::string& prefix = "f");
LabeledDataset load_csv(const std::filesystem::path& path);

/// Embedding dump with header `id,label,e0,...`.
void save_embeddings_csv(const Matrix& embeddings, const LabeledDataset& ds, const std::filesystem::path& path);

struct Split {
  LabeledDataset first;   // the held-out rows (queries, or the test part)
  LabeledDataset second;  // the rest (gallery, or the training part)
  std::vector<std::size_t> first_rows;
  std::vector<std::size_t> second_rows;
};

/// Per class, `per_class` seeded rows go to `first`, the rest to `second`.
/// Rows keep their original relative order. Throws InsufficientSamples when
/// a class has fewer than per_class + 1 rows.
Split query_gallery_split(const LabeledDataset& ds, int per_class, std::uint64_t seed);

}  // namespace dsam
