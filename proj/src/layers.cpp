#include "ccnn/layers.hpp"

#include <string>

namespace ccnn {

std::string_view to_string(ParamRole role) {
  switch (role) {
    case ParamRole::weight: return "weight";
    case ParamRole::bias: return "bias";
    case ParamRole::tunnel_gate: return "tunnel-gate";
    case ParamRole::highway_gate_weight: return "highway-gate-weight";
    case ParamRole::highway_gate_bias: return "highway-gate-bias";
    case ParamRole::gamma: return "gamma";
  }
  return "unknown";
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(HeadKind h) {
  switch (h) {
    case HeadKind::binary_sigmoid: return "binary-sigmoid";
    case HeadKind::softmax: return "softmax";
    case HeadKind::multilabel_sigmoid: return "multilabel-sigmoid";
  }
  return "unknown";
}

Matrix activate(Activation act, const Matrix& z) {
  Matrix a = z;
  switch (act) {
    case Activation::relu:
      for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::sigmoid:
      for (double& v : a.data()) v = sigmoid(v);
      break;
    case Activation::identity:
      break;
  }
  return a;
}

Matrix activation_backward(Activation act, const Matrix& z, const Matrix& a, const Matrix& da) {
  Matrix dz = da;
  auto& d = dz.data();
  switch (act) {
    case Activation::relu:
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(z.data()[i] > 0.0)) d[i] = 0.0;
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= a.data()[i] * (1.0 - a.data()[i]);
      break;
    case Activation::identity:
      break;
  }
  return dz;
}

namespace {

void require_width(const Matrix& x, std::size_t width, const char* who) {
  if (x.cols() != width) {
    throw ConfigError(std::string(who) + ": input width " + std::to_string(x.cols()) + " != layer width " +
                      std::to_string(width));
  }
}

void require_cache(bool valid, const Matrix& dy, const Matrix& x_cached, std::size_t out_width, const char* who) {
  if (!valid) throw UsageError(std::string(who) + ": backward called without a matching forward cache");
  if (dy.rows() != x_cached.rows() || dy.cols() != out_width) {
    throw UsageError(std::string(who) + ": upstream gradient shape does not match the cached forward pass");
  }
}

// (B x K) rows blended with a per-unit coefficient: out = c * a + (1 - c) * x
Matrix blend(std::span<const double> c, const Matrix& a, const Matrix& x) {
  Matrix y(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto yr = y.row(r);
    auto ar = a.row(r);
    auto xr = x.row(r);
    for (std::size_t k = 0; k < yr.size(); ++k) yr[k] = c[k] * ar[k] + (1.0 - c[k]) * xr[k];
  }
  return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// PerceptronLayer

PerceptronLayer::PerceptronLayer(std::size_t in, std::size_t out, Activation act, Rng& rng, int depth)
    : weight_(make_param(ParamRole::weight, depth, glorot_uniform(out, in, rng))),
      bias_(make_param(ParamRole::bias, depth, Matrix(1, out))),
      activation_(act) {}

PerceptronLayer::PerceptronLayer(ParamPtr weight, ParamPtr bias, Activation act)
    : weight_(std::move(weight)), bias_(std::move(bias)), activation_(act) {
  if (!weight_ || !bias_) throw ConfigError("PerceptronLayer: null parameter");
  if (bias_->value.rows() != 1 || bias_->value.cols() != weight_->value.rows()) {
    throw ConfigError("PerceptronLayer: bias length does not match weight rows");
  }
}

Matrix PerceptronLayer::pre_activation(const Matrix& x) const {
  require_width(x, in_width(), "PerceptronLayer");
  Matrix z = matmul_nt(x, weight_->value);
  add_row_broadcast(z, bias_->value.row(0));
  return z;
}

Matrix PerceptronLayer::forward(const Matrix& x, Cache& cache) const {
  cache.z = pre_activation(x);
  cache.a = activate(activation_, cache.z);
  cache.x = x;
  cache.valid = true;
  return cache.a;
}

Matrix PerceptronLayer::forward(const Matrix& x) const { return activate(activation_, pre_activation(x)); }

Matrix PerceptronLayer::backward(const Cache& cache, const Matrix& da, bool need_dx) {
  require_cache(cache.valid, da, cache.x, out_width(), "PerceptronLayer");
  Matrix dz = activation_backward(activation_, cache.z, cache.a, da);
  weight_->accumulate(matmul_tn(dz, cache.x));
  bias_->accumulate(Matrix::row_vector(column_sums(dz)));
  if (!need_dx) return {};
  return matmul(dz, weight_->value);
}

// ---------------------------------------------------------------------------
// ProjectionLayer

ProjectionLayer::ProjectionLayer(std::size_t input_dim, std::size_t width, Rng& rng)
    : weight_(make_param(ParamRole::weight, 0, glorot_uniform(width, input_dim, rng))) {}

ProjectionLayer::ProjectionLayer(ParamPtr weight) : weight_(std::move(weight)) {
  if (!weight_) throw ConfigError("ProjectionLayer: null parameter");
}

Matrix ProjectionLayer::forward(const Matrix& x, Cache& cache) const {
  Matrix y = forward(x);
  cache.x = x;
  cache.valid = true;
  return y;
}

Matrix ProjectionLayer::forward(const Matrix& x) const {
  require_width(x, input_dim(), "ProjectionLayer");
  return matmul_nt(x, weight_->value);
}

Matrix ProjectionLayer::backward(const Cache& cache, const Matrix& dy, bool need_dx) {
  require_cache(cache.valid, dy, cache.x, width(), "ProjectionLayer");
  weight_->accumulate(matmul_tn(dy, cache.x));
  if (!need_dx) return {};
  return matmul(dy, weight_->value);
}

// ---------------------------------------------------------------------------
// TunnelLayer

TunnelLayer::TunnelLayer(std::size_t width, Activation act, Rng& rng, int depth)
    : inner_(width, width, act, rng, depth), gate_(make_param(ParamRole::tunnel_gate, depth, Matrix(1, width))) {}

TunnelLayer::TunnelLayer(PerceptronLayer inner, ParamPtr gate) : inner_(std::move(inner)), gate_(std::move(gate)) {
  if (inner_.in_width() != inner_.out_width()) throw ConfigError("TunnelLayer: inner layer must be square");
  if (!gate_ || gate_->value.rows() != 1 || gate_->value.cols() != inner_.out_width()) {
    throw ConfigError("TunnelLayer: gate must be 1 x K");
  }
}

Matrix TunnelLayer::forward(const Matrix& x, Cache& cache) const {
  require_width(x, width(), "TunnelLayer");
  const Matrix& a = inner_.forward(x, cache.inner);
  cache.valid = true;
  return blend(gate_->value.row(0), a, x);
}

Matrix TunnelLayer::forward(const Matrix& x) const {
  require_width(x, width(), "TunnelLayer");
  return blend(gate_->value.row(0), inner_.forward(x), x);
}

Matrix TunnelLayer::backward(const Cache& cache, const Matrix& dy) {
  require_cache(cache.valid && cache.inner.valid, dy, cache.inner.x, width(), "TunnelLayer");
  const auto g = gate_->value.row(0);
  const Matrix& x = cache.inner.x;
  const Matrix& a = cache.inner.a;
  const std::size_t batch = dy.rows(), k = width();

  Matrix da(batch, k);
  Matrix dgate(1, k);
  Matrix dx(batch, k);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = dy(r, j);
      da(r, j) = g[j] * d;
      dgate(0, j) += d * (a(r, j) - x(r, j));
      dx(r, j) = (1.0 - g[j]) * d;
    }
  }
  gate_->accumulate(dgate);
  dx += inner_.backward(cache.inner, da);
  return dx;
}

double TunnelLayer::soft_size() const {
  double s = 0.0;
  for (double g : gate_->value.data()) s += g;
  return s;
}

// ---------------------------------------------------------------------------
// HighwayLayer

HighwayLayer::HighwayLayer(std::size_t width, Activation act, Rng& rng, int depth, double gate_bias)
    : inner_(width, width, act, rng, depth),
      gate_weight_(make_param(ParamRole::highway_gate_weight, depth, glorot_uniform(width, width, rng))),
      gate_bias_(make_param(ParamRole::highway_gate_bias, depth, Matrix(1, width, gate_bias))) {}

HighwayLayer::HighwayLayer(PerceptronLayer inner, ParamPtr gate_weight, ParamPtr gate_bias)
    : inner_(std::move(inner)), gate_weight_(std::move(gate_weight)), gate_bias_(std::move(gate_bias)) {
  const std::size_t k = inner_.out_width();
  if (inner_.in_width() != k) throw ConfigError("HighwayLayer: inner layer must be square");
  if (!gate_weight_ || gate_weight_->value.rows() != k || gate_weight_->value.cols() != k) {
    throw ConfigError("HighwayLayer: gate weight must be K x K");
  }
  if (!gate_bias_ || gate_bias_->value.rows() != 1 || gate_bias_->value.cols() != k) {
    throw ConfigError("HighwayLayer: gate bias must be 1 x K");
  }
}

Matrix HighwayLayer::gate_values(const Matrix& x) const {
  require_width(x, width(), "HighwayLayer");
  Matrix gz = matmul_nt(x, gate_weight_->value);
  add_row_broadcast(gz, gate_bias_->value.row(0));
  return activate(Activation::sigmoid, gz);
}

Matrix HighwayLayer::forward(const Matrix& x, Cache& cache) const {
  cache.gate = gate_values(x);
  const Matrix& a = inner_.forward(x, cache.inner);
  cache.valid = true;
  Matrix y(x.rows(), x.cols());
  const auto& g = cache.gate.data();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = g[i] * a.data()[i] + (1.0 - g[i]) * x.data()[i];
  return y;
}

Matrix HighwayLayer::forward(const Matrix& x) const {
  Cache scratch;
  return forward(x, scratch);
}

Matrix HighwayLayer::backward(const Cache& cache, const Matrix& dy) {
  require_cache(cache.valid && cache.inner.valid, dy, cache.inner.x, width(), "HighwayLayer");
  const Matrix& x = cache.inner.x;
  const Matrix& a = cache.inner.a;
  const Matrix& g = cache.gate;

  Matrix da(dy.rows(), dy.cols());
  Matrix dgz(dy.rows(), dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const double d = dy.data()[i];
    const double gi = g.data()[i];
    da.data()[i] = gi * d;
    dgz.data()[i] = d * (a.data()[i] - x.data()[i]) * gi * (1.0 - gi);
    dx.data()[i] = (1.0 - gi) * d;
  }
  gate_weight_->accumulate(matmul_tn(dgz, x));
  gate_bias_->accumulate(Matrix::row_vector(column_sums(dgz)));
  dx += matmul(dgz, gate_weight_->value);
  dx += inner_.backward(cache.inner, da);
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout and output heads

DropoutMask DropoutMask::sample(std::size_t rows, std::size_t cols, double keep_probability, Rng& rng) {
  if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
    throw ConfigError("DropoutMask: keep probability must lie in (0, 1]");
  }
  DropoutMask m;
  m.keep_probability = keep_probability;
  m.mask = Matrix(rows, cols, 1.0);
  if (keep_probability < 1.0) {
    const double scale = 1.0 / keep_probability;
    for (double& v : m.mask.data()) v = rng.bernoulli(keep_probability) ? scale : 0.0;
  }
  return m;
}

Matrix DropoutMask::apply(const Matrix& x) const { return hadamard(x, mask); }

Vector output_head_forward(HeadKind kind, const Vector& logits) {
  switch (kind) {
    case HeadKind::softmax: return softmax(logits);
    case HeadKind::binary_sigmoid:
    case HeadKind::multilabel_sigmoid: return sigmoid(logits);
  }
  return {};
}

Matrix output_head_forward(HeadKind kind, const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    Vector out = output_head_forward(kind, Vector(in.begin(), in.end()));
    std::copy(out.begin(), out.end(), p.row(r).begin());
  }
  return p;
}

}  // namespace ccnn
