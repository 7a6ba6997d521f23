#include "ccnn/optim.hpp"

#include <cmath>
#include <string>

namespace ccnn {

void adam_step(AdamState& state, Matrix& value, const Matrix& grad, double lr, const AdamConfig& cfg) {
  if (!value.same_shape(grad)) throw ConfigError("adam_step: gradient shape does not match parameter");
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (state.m.empty()) {
    state.m = Matrix(value.rows(), value.cols());
    state.v = Matrix(value.rows(), value.cols());
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto& m = state.m.data();
  auto& v = state.v.data();
  auto& p = value.data();
  const auto& g = grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

double apply_structural_penalty(ParamRole role, double grad, double lambda) {
  switch (role) {
    case ParamRole::tunnel_gate: return grad + lambda;
    case ParamRole::gamma: return grad - lambda;
    default: return grad;
  }
}

double project_unit_interval(double value) { return std::min(1.0, std::max(0.0, value)); }

void l2_decay(ParamRole role, const Matrix& value, Matrix& grad, double c) {
  if (role != ParamRole::weight || c == 0.0) return;
  for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += 2.0 * c * value.data()[i];
}

double depth_lr_scale(int depth, bool enabled) { return enabled ? std::pow(0.75, depth) : 1.0; }

void Optimizer::step(std::span<const ParamPtr> params, double lr) const {
  for (const ParamPtr& p : params) {
    if (!p->touched) continue;
    if (!p->grad.all_finite()) {
      throw NumericalError("non-finite gradient in " + std::string(to_string(p->role)) + " parameter at depth " +
                           std::to_string(p->depth));
    }
    if (is_structural(p->role) && cfg_.lambda_l1 != 0.0) {
      for (double& g : p->grad.data()) g = apply_structural_penalty(p->role, g, cfg_.lambda_l1);
    }
    l2_decay(p->role, p->value, p->grad, cfg_.l2_coeff);
    adam_step(p->adam, p->value, p->grad, lr * depth_lr_scale(p->depth, cfg_.depth_decay), cfg_.adam);
    if (is_structural(p->role)) {
      for (double& v : p->value.data()) v = project_unit_interval(v);
    }
  }
}

}  // namespace ccnn
