#include "ccnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ccnn {

std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::binary: return "binary";
    case TaskKind::categorical: return "categorical";
    case TaskKind::multilabel: return "multilabel";
  }
  return "unknown";
}

TaskKind task_from_string(std::string_view s) {
  if (s == "binary") return TaskKind::binary;
  if (s == "categorical") return TaskKind::categorical;
  if (s == "multilabel") return TaskKind::multilabel;
  throw ConfigError("unknown task kind '" + std::string(s) + "'");
}

LossKind loss_for(TaskKind t) {
  switch (t) {
    case TaskKind::binary: return LossKind::binary_cross_entropy;
    case TaskKind::categorical: return LossKind::categorical_cross_entropy;
    case TaskKind::multilabel: return LossKind::multilabel_binary_cross_entropy;
  }
  throw ConfigError("loss_for: unknown task");
}

HeadKind head_for(TaskKind t) {
  switch (t) {
    case TaskKind::binary: return HeadKind::binary_sigmoid;
    case TaskKind::categorical: return HeadKind::softmax;
    case TaskKind::multilabel: return HeadKind::multilabel_sigmoid;
  }
  throw ConfigError("head_for: unknown task");
}

namespace {

double floored_log(double p) { return std::log(std::max(p, kProbabilityFloor)); }

void check_binary_target(double t) {
  if (t != 0.0 && t != 1.0) throw DataError("target value " + std::to_string(t) + " is not in {0, 1}");
}

}  // namespace

LossGrad loss_and_grad(LossKind kind, const Vector& probabilities, const Vector& target) {
  if (probabilities.size() != target.size()) throw ConfigError("loss_and_grad: probability/target length mismatch");
  LossGrad out;
  out.dlogits.resize(probabilities.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    check_binary_target(target[i]);
    const double p = probabilities[i];
    const double t = target[i];
    if (kind == LossKind::categorical_cross_entropy) {
      if (t == 1.0) out.loss -= floored_log(p);
    } else {
      out.loss -= t * floored_log(p) + (1.0 - t) * floored_log(1.0 - p);
    }
    out.dlogits[i] = p - t;
  }
  return out;
}

BatchLoss batch_loss_and_grad(LossKind kind, const Matrix& probabilities, const Matrix& targets) {
  if (!probabilities.same_shape(targets)) throw ConfigError("batch_loss_and_grad: shape mismatch");
  if (probabilities.rows() == 0) throw UsageError("batch_loss_and_grad: empty batch");
  BatchLoss out;
  out.dlogits = Matrix(probabilities.rows(), probabilities.cols());
  const double inv = 1.0 / static_cast<double>(probabilities.rows());
  for (std::size_t r = 0; r < probabilities.rows(); ++r) {
    auto p = probabilities.row(r);
    auto t = targets.row(r);
    LossGrad lg = loss_and_grad(kind, Vector(p.begin(), p.end()), Vector(t.begin(), t.end()));
    out.mean_loss += lg.loss;
    auto d = out.dlogits.row(r);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = lg.dlogits[c] * inv;
  }
  out.mean_loss *= inv;
  return out;
}

double instance_errors(TaskKind kind, std::span<const double> p, std::span<const double> t) {
  switch (kind) {
    case TaskKind::binary: {
      const double predicted = p[0] >= 0.5 ? 1.0 : 0.0;
      return predicted == t[0] ? 0.0 : 1.0;
    }
    case TaskKind::categorical: {
      const auto predicted = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      return t[predicted] == 1.0 ? 0.0 : 1.0;
    }
    case TaskKind::multilabel: {
      double wrong = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double predicted = p[i] >= 0.5 ? 1.0 : 0.0;
        if (predicted != t[i]) wrong += 1.0;
      }
      return wrong;
    }
  }
  return 0.0;
}

double error_rate(TaskKind kind, const Matrix& probabilities, const Matrix& targets) {
  if (!probabilities.same_shape(targets)) throw ConfigError("error_rate: shape mismatch");
  if (probabilities.rows() == 0) return 0.0;
  double wrong = 0.0;
  for (std::size_t r = 0; r < probabilities.rows(); ++r) wrong += instance_errors(kind, probabilities.row(r), targets.row(r));
  return wrong / static_cast<double>(probabilities.rows());
}

void ConfusionCounts::add(std::span<const double> p, std::span<const double> t, double threshold) {
  if (p.size() != labels() || t.size() != labels()) throw ConfigError("ConfusionCounts: label count mismatch");
  for (std::size_t i = 0; i < labels(); ++i) {
    const bool predicted = p[i] >= threshold;
    const bool actual = t[i] == 1.0;
    if (predicted && actual) ++tp[i];
    else if (predicted) ++fp[i];
    else if (actual) ++fn[i];
  }
}

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& other) {
  if (other.labels() != labels()) throw ConfigError("ConfusionCounts::merge: label count mismatch");
  for (std::size_t i = 0; i < labels(); ++i) {
    tp[i] += other.tp[i];
    fp[i] += other.fp[i];
    fn[i] += other.fn[i];
  }
  return *this;
}

ConfusionCounts confusion_counts(const Matrix& probabilities, const Matrix& targets, double threshold) {
  ConfusionCounts c(probabilities.cols());
  for (std::size_t r = 0; r < probabilities.rows(); ++r) c.add(probabilities.row(r), targets.row(r), threshold);
  return c;
}

double macro_f1(const ConfusionCounts& counts) {
  if (counts.labels() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.labels(); ++i) {
    const auto denom = 2 * counts.tp[i] + counts.fp[i] + counts.fn[i];
    if (denom > 0) sum += 2.0 * static_cast<double>(counts.tp[i]) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(counts.labels());
}

SoftSizes tunnel_soft_sizes(std::span<const TunnelLayer> layers) {
  SoftSizes s;
  for (const TunnelLayer& l : layers) {
    s.per_layer.push_back(l.soft_size());
    s.total += s.per_layer.back();
  }
  return s;
}

SoftSizes highway_soft_sizes(std::span<const HighwayLayer> layers, const Matrix& inputs) {
  if (inputs.rows() == 0) throw UsageError("highway_soft_sizes: empty dataset");
  SoftSizes s;
  Matrix h = inputs;
  const double inv = 1.0 / static_cast<double>(inputs.rows());
  for (const HighwayLayer& l : layers) {
    HighwayLayer::Cache cache;
    Matrix next = l.forward(h, cache);
    double layer_sum = 0.0;
    for (double g : column_sums(cache.gate)) layer_sum += g * inv;
    s.per_layer.push_back(layer_sum);
    s.total += layer_sum;
    h = std::move(next);
  }
  return s;
}

}  // namespace ccnn
