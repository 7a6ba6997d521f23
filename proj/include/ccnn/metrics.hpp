#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ccnn/layers.hpp"

namespace ccnn {

enum class TaskKind { binary, categorical, multilabel };
enum class LossKind { binary_cross_entropy, categorical_cross_entropy, multilabel_binary_cross_entropy };

std::string_view to_string(TaskKind t);
TaskKind task_from_string(std::string_view s);
LossKind loss_for(TaskKind t);
HeadKind head_for(TaskKind t);

inline constexpr double kProbabilityFloor = 1e-12;

struct LossGrad {
  double loss = 0.0;
  Vector dlogits;
};

// Loss of one instance, with the gradient w.r.t. the logits (probability - target).
LossGrad loss_and_grad(LossKind kind, const Vector& probabilities, const Vector& target);

struct BatchLoss {
  double mean_loss = 0.0;
  Matrix dlogits;  // already divided by the batch size
};
BatchLoss batch_loss_and_grad(LossKind kind, const Matrix& probabilities, const Matrix& targets);

// Binary: p >= 0.5 predicts 1. Categorical: argmax, ties to the lowest index.
// Multilabel: per-instance count of wrong labels at threshold 0.5, averaged (may exceed 1).
double error_rate(TaskKind kind, const Matrix& probabilities, const Matrix& targets);
// Number of errors per instance under the same rules.
double instance_errors(TaskKind kind, std::span<const double> probabilities, std::span<const double> target);

struct ConfusionCounts {
  std::vector<std::int64_t> tp;
  std::vector<std::int64_t> fp;
  std::vector<std::int64_t> fn;

  explicit ConfusionCounts(std::size_t labels = 0) : tp(labels, 0), fp(labels, 0), fn(labels, 0) {}
  std::size_t labels() const { return tp.size(); }
  void add(std::span<const double> probabilities, std::span<const double> target, double threshold = 0.5);
  ConfusionCounts& merge(const ConfusionCounts& other);
};

ConfusionCounts confusion_counts(const Matrix& probabilities, const Matrix& targets, double threshold = 0.5);

// Unweighted mean of 2TP / (2TP + FP + FN); labels with a zero denominator score 0.
double macro_f1(const ConfusionCounts& counts);

struct SoftSizes {
  Vector per_layer;
  double total = 0.0;
};

// Per-layer sum of gate values.
SoftSizes tunnel_soft_sizes(std::span<const TunnelLayer> layers);
// Per-layer sum over units of the gate activation averaged over `inputs`, which
// are fed to the first highway layer (i.e. already projected).
SoftSizes highway_soft_sizes(std::span<const HighwayLayer> layers, const Matrix& inputs);

}  // namespace ccnn
