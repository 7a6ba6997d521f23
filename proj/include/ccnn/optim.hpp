#pragma once

#include <span>

#include "ccnn/parameter.hpp"

namespace ccnn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam on a raw tensor; advances state.t by one.
void adam_step(AdamState& state, Matrix& value, const Matrix& grad, double lr, const AdamConfig& cfg = {});

// Gradient contribution of the L1 structural terms: lambda * sum(g) for tunnel
// gates and lambda * sum(1 - gamma) for budding nodes. Other roles get nothing.
double apply_structural_penalty(ParamRole role, double grad, double lambda);

double project_unit_interval(double value);

// grad + 2c * p for weight matrices; every other role passes through unchanged.
void l2_decay(ParamRole role, const Matrix& value, Matrix& grad, double c);

// (3/4)^depth when enabled, 1 otherwise.
double depth_lr_scale(int depth, bool enabled);

struct OptimizerConfig {
  double lambda_l1 = 0.001;
  double l2_coeff = 1e-5;
  bool depth_decay = true;
  AdamConfig adam;
};

// One training step over a parameter set: penalties, decay, Adam, projection.
// Only parameters touched by the last backward pass are updated.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const ParamPtr> params, double lr) const;
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
};

}  // namespace ccnn
