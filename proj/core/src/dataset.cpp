#include "dsam/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dsam/errors.hpp"

namespace dsam {

void SyntheticSpec::validate() const {
  if (classes < 2) fail(ErrorCode::InvalidConfig, "data.classes must be >= 2");
  if (samples_per_class < 2) fail(ErrorCode::InvalidConfig, "data.samples_per_class must be >= 2");
  if (input_dim < 1) fail(ErrorCode::InvalidConfig, "data.input_dim must be >= 1");
  if (modes < 1) fail(ErrorCode::InvalidConfig, "data.modes must be >= 1");
  if (!(sigma > 0.0)) fail(ErrorCode::InvalidConfig, "data.sigma must be > 0");
  if (!(center_scale > 0.0)) fail(ErrorCode::InvalidConfig, "data.center_scale must be > 0");
  if (!(mode_scale >= 0.0)) fail(ErrorCode::InvalidConfig, "data.mode_scale must be >= 0");
}

int LabeledDataset::class_count() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(rows[k]));
    out.labels.push_back(labels[rows[k]]);
    out.ids.push_back(ids[rows[k]]);
  }
  return out;
}

void validate_dataset(const LabeledDataset& ds) {
  if (ds.labels.empty()) fail(ErrorCode::SchemaError, "dataset is empty");
  if (static_cast<std::size_t>(ds.features.rows()) != ds.labels.size() || ds.ids.size() != ds.labels.size()) {
    fail(ErrorCode::SchemaError, "feature rows, labels and ids disagree in length");
  }
  std::vector<char> present(ds.labels.size() + 1, 0);
  int top = -1;
  for (int label : ds.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= ds.labels.size()) {
      fail(ErrorCode::SchemaError, "label " + std::to_string(label) + " is not in 0..K-1");
    }
    present[static_cast<std::size_t>(label)] = 1;
    top = std::max(top, label);
  }
  for (int k = 0; k <= top; ++k) {
    if (!present[static_cast<std::size_t>(k)]) fail(ErrorCode::SchemaError, "labels are not contiguous: missing " + std::to_string(k));
  }
}

Matrix draw_class_centers(int classes, int dim, double scale, const std::function<double()>& normal) {
  Matrix centers(classes, dim);
  for (Eigen::Index k = 0; k < classes; ++k) {
    for (;;) {
      for (Eigen::Index c = 0; c < dim; ++c) centers(k, c) = scale * normal();
      bool collides = false;
      for (Eigen::Index prev = 0; prev < k && !collides; ++prev) {
        collides = (centers.row(k) - centers.row(prev)).norm() <= 1e-9;
      }
      if (!collides) break;
    }
  }
  return centers;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::function<double()> normal = [&] { return gauss(rng); };

  const Matrix centers = draw_class_centers(spec.classes, spec.input_dim, spec.center_scale, normal);
  const auto rows = static_cast<Eigen::Index>(spec.classes) * spec.samples_per_class;
  LabeledDataset ds;
  ds.features.resize(rows, spec.input_dim);
  ds.labels.reserve(static_cast<std::size_t>(rows));
  ds.ids.reserve(static_cast<std::size_t>(rows));

  Eigen::Index row = 0;
  for (int k = 0; k < spec.classes; ++k) {
    Matrix modes(spec.modes, spec.input_dim);
    for (Eigen::Index m = 0; m < spec.modes; ++m) {
      for (Eigen::Index c = 0; c < spec.input_dim; ++c) modes(m, c) = centers(k, c) + spec.mode_scale * normal();
    }
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      const Eigen::Index m = s % spec.modes;
      for (Eigen::Index c = 0; c < spec.input_dim; ++c) ds.features(row, c) = modes(m, c) + spec.sigma * normal();
      ds.labels.push_back(k);
      ds.ids.push_back(row);
    }
  }

  if (spec.standardize) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) {
      auto col = ds.features.col(c);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      col.array() -= mean;
      if (sd > 0.0) col /= sd;
    }
  }
  return ds;
}

namespace {

void write_table(const Matrix& values, const std::vector<int>& labels, const std::vector<std::int64_t>& ids,
                 const std::filesystem::path& path, const std::string& prefix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "id,label";
  for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << prefix << c;
  out << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << ids[static_cast<std::size_t>(r)] << ',' << labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", values(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line_no, const std::filesystem::path& path) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    fail(ErrorCode::ParseError, path.string() + ": line " + std::to_string(line_no) + ": cannot parse '" +
                                    std::string(field) + "'");
  }
  return value;
}

}  // namespace

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path, const std::string& prefix) {
  write_table(ds.features, ds.labels, ds.ids, path, prefix);
}

void save_embeddings_csv(const Matrix& embeddings, const LabeledDataset& ds, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(embeddings.rows()) != ds.size()) {
    fail(ErrorCode::DimensionMismatch, "embedding rows do not match dataset rows");
  }
  write_table(embeddings, ds.labels, ds.ids, path, "e");
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) fail(ErrorCode::SchemaError, path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    fail(ErrorCode::SchemaError, path.string() + ": header must be id,label,<features...>");
  }
  const std::size_t width = header.size() - 2;

  std::vector<double> values;
  LabeledDataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::SchemaError, path.string() + ": line " + std::to_string(line_no) + ": expected " +
                                       std::to_string(header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
    }
    ds.ids.push_back(parse_field<std::int64_t>(fields[0], line_no, path));
    ds.labels.push_back(parse_field<int>(fields[1], line_no, path));
    for (std::size_t c = 0; c < width; ++c) values.push_back(parse_field<double>(fields[c + 2], line_no, path));
  }
  if (ds.labels.empty()) fail(ErrorCode::SchemaError, path.string() + ": no data rows");
  ds.features = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(ds.labels.size()),
                                         static_cast<Eigen::Index>(width));
  validate_dataset(ds);
  return ds;
}

Split query_gallery_split(const LabeledDataset& ds, int per_class, std::uint64_t seed) {
  if (per_class < 0) fail(ErrorCode::InvalidConfig, "per-class split count must be >= 0");
  std::map<int, std::vector<std::size_t>> grouped;
  for (std::size_t i = 0; i < ds.size(); ++i) grouped[ds.labels[i]].push_back(i);

  Rng rng(seed);
  std::vector<char> held(ds.size(), 0);
  for (auto& [label, rows] : grouped) {
    if (rows.size() < static_cast<std::size_t>(per_class) + 1) {
      fail(ErrorCode::InsufficientSamples, "class " + std::to_string(label) + " has " +
                                               std::to_string(rows.size()) + " rows, needs " +
                                               std::to_string(per_class + 1));
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (int k = 0; k < per_class; ++k) held[rows[static_cast<std::size_t>(k)]] = 1;
  }

  Split split;
  for (std::size_t i = 0; i < ds.size(); ++i) (held[i] ? split.first_rows : split.second_rows).push_back(i);
  split.first = ds.subset(split.first_rows);
  split.second = ds.subset(split.second_rows);
  return split;
}

}  // namespace dsam
