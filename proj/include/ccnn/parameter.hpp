#pragma once

#include <cstdint>
#include <memory>
#include <string_view>

#include "ccnn/numeric.hpp"

namespace ccnn {

enum class ParamRole { weight, bias, tunnel_gate, highway_gate_weight, highway_gate_bias, gamma };

std::string_view to_string(ParamRole role);

inline bool is_structural(ParamRole role) { return role == ParamRole::tunnel_gate || role == ParamRole::gamma; }

struct AdamState {
  Matrix m;
  Matrix v;
  std::int64_t t = 0;
};

// A trainable tensor with its gradient accumulator and optimizer moments.
// Held through shared_ptr so that tied weights are a single Parameter used twice.
struct Parameter {
  Parameter(ParamRole r, int d, Matrix init)
      : role(r), depth(d), value(std::move(init)), grad(value.rows(), value.cols()) {}

  ParamRole role;
  int depth = 0;  // drives the (3/4)^depth learning-rate scale
  Matrix value;
  Matrix grad;
  AdamState adam;
  // Set when backward wrote into grad since the last zero_grad(); parameters
  // off the compute path are skipped by the optimizer.
  bool touched = false;

  void zero_grad() {
    grad.fill(0.0);
    touched = false;
  }
  void accumulate(const Matrix& g) {
    grad += g;
    touched = true;
  }
  std::size_t count() const { return value.size(); }
};

using ParamPtr = std::shared_ptr<Parameter>;

inline ParamPtr make_param(ParamRole role, int depth, Matrix init) {
  return std::make_shared<Parameter>(role, depth, std::move(init));
}

}  // namespace ccnn
