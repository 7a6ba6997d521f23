#pragma once

#include <cstddef>
#include <string_view>

#include "ccnn/numeric.hpp"
#include "ccnn/parameter.hpp"

namespace ccnn {

enum class Activation { relu, sigmoid, identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

Matrix activate(Activation act, const Matrix& z);
// da -> dz through the activation, given the cached pre-activation z and output a.
// The relu derivative at exactly 0 is taken as 0.
Matrix activation_backward(Activation act, const Matrix& z, const Matrix& a, const Matrix& da);

// y = act(x W^T + b), rows of x are instances. W is (out x in).
class PerceptronLayer {
 public:
  struct Cache {
    Matrix x;
    Matrix z;
    Matrix a;
    bool valid = false;
  };

  PerceptronLayer() = default;
  PerceptronLayer(std::size_t in, std::size_t out, Activation act, Rng& rng, int depth = 0);
  PerceptronLayer(ParamPtr weight, ParamPtr bias, Activation act);

  std::size_t in_width() const { return weight_->value.cols(); }
  std::size_t out_width() const { return weight_->value.rows(); }
  Activation activation() const { return activation_; }

  Matrix forward(const Matrix& x, Cache& cache) const;
  Matrix forward(const Matrix& x) const;
  // Accumulates dW, db into the parameters and returns dx (empty when !need_dx).
  Matrix backward(const Cache& cache, const Matrix& da, bool need_dx = true);

  const ParamPtr& weight() const { return weight_; }
  const ParamPtr& bias() const { return bias_; }
  std::size_t parameter_count() const { return weight_->count() + bias_->count(); }

 private:
  Matrix pre_activation(const Matrix& x) const;

  ParamPtr weight_;
  ParamPtr bias_;
  Activation activation_ = Activation::identity;
};

// Bias-free linear map from the input space to the hidden width.
class ProjectionLayer {
 public:
  struct Cache {
    Matrix x;
    bool valid = false;
  };

  ProjectionLayer() = default;
  ProjectionLayer(std::size_t input_dim, std::size_t width, Rng& rng);
  explicit ProjectionLayer(ParamPtr weight);

  std::size_t input_dim() const { return weight_->value.cols(); }
  std::size_t width() const { return weight_->value.rows(); }

  Matrix forward(const Matrix& x, Cache& cache) const;
  Matrix forward(const Matrix& x) const;
  Matrix backward(const Cache& cache, const Matrix& dy, bool need_dx = false);

  const ParamPtr& weight() const { return weight_; }

 private:
  ParamPtr weight_;
};

// y = g * act(Wx + b) + (1 - g) * x, one constant gate per unit.
class TunnelLayer {
 public:
  struct Cache {
    PerceptronLayer::Cache inner;
    bool valid = false;
  };

  TunnelLayer() = default;
  // Gates start at exactly 0 so the layer is the identity.
  TunnelLayer(std::size_t width, Activation act, Rng& rng, int depth);
  TunnelLayer(PerceptronLayer inner, ParamPtr gate);

  std::size_t width() const { return inner_.out_width(); }

  Matrix forward(const Matrix& x, Cache& cache) const;
  Matrix forward(const Matrix& x) const;
  Matrix backward(const Cache& cache, const Matrix& dy);

  const PerceptronLayer& inner() const { return inner_; }
  PerceptronLayer& inner() { return inner_; }
  const ParamPtr& gate() const { return gate_; }
  double soft_size() const;
  std::size_t parameter_count() const { return inner_.parameter_count() + gate_->count(); }

 private:
  PerceptronLayer inner_;
  ParamPtr gate_;  // 1 x K, values in [0, 1]
};

// y = g(x) * act(Wx + b) + (1 - g(x)) * x with g(x) = sigmoid(W_g x + b_g).
class HighwayLayer {
 public:
  struct Cache {
    PerceptronLayer::Cache inner;
    Matrix gate;
    bool valid = false;
  };

  static constexpr double kDefaultGateBias = -2.0;

  HighwayLayer() = default;
  HighwayLayer(std::size_t width, Activation act, Rng& rng, int depth, double gate_bias = kDefaultGateBias);
  HighwayLayer(PerceptronLayer inner, ParamPtr gate_weight, ParamPtr gate_bias);

  std::size_t width() const { return inner_.out_width(); }

  Matrix forward(const Matrix& x, Cache& cache) const;
  Matrix forward(const Matrix& x) const;
  Matrix backward(const Cache& cache, const Matrix& dy);
  // Gate activations for a batch, (B x K).
  Matrix gate_values(const Matrix& x) const;

  const PerceptronLayer& inner() const { return inner_; }
  PerceptronLayer& inner() { return inner_; }
  const ParamPtr& gate_weight() const { return gate_weight_; }
  const ParamPtr& gate_bias() const { return gate_bias_; }
  std::size_t parameter_count() const {
    return inner_.parameter_count() + gate_weight_->count() + gate_bias_->count();
  }

 private:
  PerceptronLayer inner_;
  ParamPtr gate_weight_;  // K x K
  ParamPtr gate_bias_;    // 1 x K
};

// Inverted dropout: kept entries are scaled by 1 / keep_probability.
struct DropoutMask {
  double keep_probability = 1.0;
  Matrix mask;

  static DropoutMask sample(std::size_t rows, std::size_t cols, double keep_probability, Rng& rng);
  Matrix apply(const Matrix& x) const;
};

enum class HeadKind { binary_sigmoid, softmax, multilabel_sigmoid };

std::string_view to_string(HeadKind h);

Vector output_head_forward(HeadKind kind, const Vector& logits);
Matrix output_head_forward(HeadKind kind, const Matrix& logits);

}  // namespace ccnn
