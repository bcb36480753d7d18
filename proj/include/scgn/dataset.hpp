#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scgn/rng.hpp"
#include "scgn/tensor.hpp"

namespace scgn {

enum class Partition : std::uint8_t { kTrain, kTest };

/// Samples (one row each) with class labels and a train/test assignment.
struct LabeledDataset {
  Tensor2D features;
  std::vector<std::size_t> labels;
  std::vector<Partition> partition;
  std::vector<std::string> class_names;

  std::size_t num_samples() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::size_t input_dim() const { return features.cols(); }

  /// Sample indices of `class_id` in `part`, in dataset order.
  std::vector<std::size_t> indices_of(std::size_t class_id, Partition part) const;
  /// Indices of every sample in `part` whose class is in `classes`.
  std::vector<std::size_t> indices_in(const std::vector<std::size_t>& classes, Partition part) const;

  /// Throws DomainError when labels, partition and features disagree or a class is empty.
  void validate() const;
};

struct SyntheticSpec {
  std::size_t num_classes = 30;
  std::size_t input_dim = 20;
  std::size_t samples_per_class = 40;
  double class_separation = 4.0;
  double intra_spread = 1.0;
  double test_fraction = 0.25;
};

/// Isotropic Gaussian mixture: class means uniform on the sphere of radius
/// `class_separation`, samples N(mean, intra_spread^2 I). The last
/// round(test_fraction * samples_per_class) samples of each class are test.
LabeledDataset generate_synthetic_dataset(const SyntheticSpec& spec, RngStream& rng);

/// Per-class class means used to generate a synthetic dataset, same order as
/// `generate_synthetic_dataset` draws them for an identically seeded stream.
Tensor2D synthetic_class_means(const SyntheticSpec& spec, RngStream rng);

/// Reads the plain-text feature format:
///
///     # comment
///     dim=<D> classes=<C>
///     <label>,<v1>,...,<vD>
///
/// Every sample starts in the train partition; see `assign_holdout`.
LabeledDataset load_feature_file(const std::filesystem::path& path);
void write_feature_file(const LabeledDataset& data, const std::filesystem::path& path);

/// Moves round(fraction * n_c) randomly chosen samples of every class to the test partition,
/// leaving at least one train sample per class.
void assign_holdout(LabeledDataset& data, double fraction, RngStream& rng);

}  // namespace scgn
