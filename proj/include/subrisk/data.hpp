#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "subrisk/risk.hpp"

namespace subrisk {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labelled examples. Labels are dense class indices and every class in
/// [0, num_classes) occurs at least once.
class Dataset {
 public:
  Dataset(FeatureMatrix features, std::vector<int> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  std::size_t num_classes() const noexcept { return class_counts_.size(); }

  const FeatureMatrix& features() const noexcept { return features_; }
  std::span<const int> labels() const noexcept { return labels_; }
  std::span<const std::size_t> class_counts() const noexcept { return class_counts_; }

  /// Rows in the given order. The subset must still contain every class.
  Dataset subset(std::span<const std::size_t> indices) const;

  /// Optional column names carried from a CSV header (features only).
  std::vector<std::string> feature_names;

 private:
  FeatureMatrix features_;
  std::vector<int> labels_;
  std::vector<std::size_t> class_counts_;
};

/// Per-column zero mean / unit variance (population variance, floored at 1e-12).
Dataset standardize(const Dataset& data);

/// Reads a comma-separated file with a header row. Labels are re-indexed in
/// first-appearance order and features are standardized.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);

/// Writes features and integer labels (label column last, named "label").
void write_csv(const Dataset& data, const std::filesystem::path& path);

struct Split {
  Dataset first;
  Dataset second;
  std::vector<std::size_t> first_indices;   // ascending
  std::vector<std::size_t> second_indices;  // ascending
};

/// Per class, round(fraction * count) examples go to the first part, clamped
/// so both parts keep at least one example of every class.
Split stratified_split(const Dataset& data, double fraction, std::uint64_t seed);

enum class ReferenceKind { ClassRatio, Uniform };

struct SubgroupPartition {
  std::vector<std::size_t> assignment;            // example -> subgroup
  std::vector<std::vector<std::size_t>> members;  // subgroup -> examples (ascending)
  std::vector<std::size_t> sizes;
  ReferenceDistribution pi;

  std::size_t num_subgroups() const noexcept { return sizes.size(); }
  std::size_t num_examples() const noexcept { return assignment.size(); }
};

SubgroupPartition partition_by_class(const Dataset& data, ReferenceKind reference);
SubgroupPartition partition_per_example(const Dataset& data);

/// Isotropic unit-variance Gaussian blobs; class k is centred at
/// k * separation along the first feature axis. Rows are shuffled.
Dataset synth_imbalanced(std::span<const std::size_t> n_per_class, std::size_t dim,
                         double separation, std::uint64_t seed);

}  // namespace subrisk
