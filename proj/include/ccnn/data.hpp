#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>

#include "ccnn/metrics.hpp"
#include "ccnn/numeric.hpp"

namespace ccnn {

// Inputs (N x D) and 0/1 targets (N x C). Binary tasks have C == 1, categorical
// targets are one-hot.
class Dataset {
 public:
  Dataset() = default;
  // Throws DataError when the invariants do not hold.
  Dataset(Matrix inputs, Matrix targets, TaskKind task);

  const Matrix& inputs() const { return inputs_; }
  const Matrix& targets() const { return targets_; }
  TaskKind task() const { return task_; }
  std::size_t size() const { return inputs_.rows(); }
  std::size_t input_dim() const { return inputs_.cols(); }
  std::size_t output_dim() const { return targets_.cols(); }
  bool empty() const { return size() == 0; }

  Dataset subset(std::span<const std::size_t> rows) const;
  // Category index of a categorical row.
  std::size_t label_of(std::size_t row) const;

 private:
  Matrix inputs_;
  Matrix targets_;
  TaskKind task_ = TaskKind::binary;
};

// Zero mean, unit (population) variance per input column. Constant columns are
// only centred.
void standardize_inputs(Matrix& inputs);

enum class SpiralVariant { easy, medium, difficult };

std::string_view to_string(SpiralVariant v);
SpiralVariant spiral_variant_from_string(std::string_view s);

struct SpiralSpec {
  SpiralVariant variant = SpiralVariant::easy;
  std::size_t points_per_class = 200;
  double theta0 = 0.0;
  double angle_span = 0.0;
  double r_min = 0.2;
  double radius_slope = 0.0;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  bool standardize = true;

  // theta0 = pi/6, r_min = 0.2, slope = 1/(2 pi), span pi / 2 pi / 3.5 pi.
  static SpiralSpec defaults(SpiralVariant variant, std::uint64_t seed = 0);
};

// Class 0 point i sits at angle theta_i = theta0 + span * i / n on the radius
// r_min + slope * theta_i; class 1 is the same arm rotated by pi. Rows alternate
// class 0 / class 1.
Dataset generate_two_spirals(const SpiralSpec& spec);

// IDX pair (images magic 2051, labels magic 2049), pixels / 255, one-hot labels.
Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
// Writes the IDX pair for a categorical dataset with 784-pixel rows in [0, 1].
void write_mnist_idx(const Dataset& d, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// Keeps the two named classes; class_a maps to target 0 and class_b to 1.
Dataset filter_binary_mnist(const Dataset& d, std::size_t class_a, std::size_t class_b);

// Seeded shuffle, then the first round(N * train_fraction) rows train.
std::pair<Dataset, Dataset> split_train_validation(const Dataset& d, double train_fraction, std::uint64_t seed);

// Seeded random subset of n rows (order shuffled).
Dataset sample_subset(const Dataset& d, std::size_t n, std::uint64_t seed);

// Header f0..f{D-1},l0..l{C-1}; label cells must be 0 or 1.
Dataset load_multilabel_csv(const std::filesystem::path& path, bool standardize = false);
void write_multilabel_csv(const Dataset& d, const std::filesystem::path& path);

// Header x0..x{D-1},label for binary data (the gen-spirals output format).
Dataset load_binary_csv(const std::filesystem::path& path);
void write_binary_csv(const Dataset& d, const std::filesystem::path& path);

// Synthetic multilabel task: labels are thresholded random linear functions of
// Gaussian features.
Dataset generate_synthetic_multilabel(std::size_t n, std::size_t features, std::size_t labels, std::uint64_t seed);

}  // namespace ccnn
