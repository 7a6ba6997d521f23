#include "ccnn/network.hpp"

#include <set>
#include <string>

namespace ccnn {

using nlohmann::json;

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::tunnel: return "tunnel";
    case Architecture::highway: return "highway";
    case Architecture::budding: return "budding";
    case Architecture::mlp: return "mlp-baseline";
  }
  return "unknown";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "tunnel") return Architecture::tunnel;
  if (s == "highway") return Architecture::highway;
  if (s == "budding") return Architecture::budding;
  if (s == "mlp-baseline" || s == "mlp") return Architecture::mlp;
  throw ConfigError("unknown architecture '" + std::string(s) + "' (expected tunnel|highway|budding|mlp-baseline)");
}

namespace {

ParamPtr copy_param(const ParamPtr& p) { return std::make_shared<Parameter>(*p); }

PerceptronLayer copy_layer(const PerceptronLayer& l) {
  return PerceptronLayer(copy_param(l.weight()), copy_param(l.bias()), l.activation());
}

}  // namespace

Network::Network(const NetworkSpec& spec, Rng& rng) : spec_(spec) {
  if (spec_.width == 0 || spec_.input_dim == 0 || spec_.output_dim == 0) {
    throw ConfigError("Network: widths must be positive");
  }
  if (spec_.task == TaskKind::binary && spec_.output_dim != 1) throw ConfigError("Network: binary task needs output_dim 1");
  if (spec_.architecture != Architecture::budding && spec_.layers < 0) throw ConfigError("Network: negative layer count");
  projection_ = ProjectionLayer(spec_.input_dim, spec_.width, rng);
  switch (spec_.architecture) {
    case Architecture::tunnel:
      for (int l = 0; l < spec_.layers; ++l) tunnels_.emplace_back(spec_.width, spec_.activation, rng, l + 1);
      break;
    case Architecture::highway:
      for (int l = 0; l < spec_.layers; ++l) {
        highways_.emplace_back(spec_.width, spec_.activation, rng, l + 1, spec_.highway_gate_bias);
      }
      break;
    case Architecture::mlp:
      for (int l = 0; l < spec_.layers; ++l) mlp_.emplace_back(spec_.width, spec_.width, spec_.activation, rng, l + 1);
      break;
    case Architecture::budding:
      tree_.emplace(spec_.width, spec_.max_depth, spec_.activation, rng);
      break;
  }
  output_ = PerceptronLayer(spec_.width, spec_.output_dim, Activation::identity, rng, 0);
}

Network::Network(const Network& other)
    : spec_(other.spec_),
      projection_(copy_param(other.projection_.weight())),
      tree_(other.tree_),
      output_(copy_layer(other.output_)) {
  for (const auto& l : other.tunnels_) tunnels_.emplace_back(copy_layer(l.inner()), copy_param(l.gate()));
  for (const auto& l : other.highways_) {
    highways_.emplace_back(copy_layer(l.inner()), copy_param(l.gate_weight()), copy_param(l.gate_bias()));
  }
  for (const auto& l : other.mlp_) mlp_.push_back(copy_layer(l));
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Matrix Network::body_forward(const Matrix& h0) const {
  Matrix h = h0;
  for (const auto& l : tunnels_) h = l.forward(h);
  for (const auto& l : highways_) h = l.forward(h);
  for (const auto& l : mlp_) h = l.forward(h);
  if (tree_) h = tree_->forward(h);
  return h;
}

Matrix Network::logits(const Matrix& x) const { return output_.forward(body_forward(projection_.forward(x))); }

Matrix Network::predict(const Matrix& x) const { return output_head_forward(head_for(spec_.task), logits(x)); }

double Network::loss(const Matrix& x, const Matrix& targets) const {
  return batch_loss_and_grad(loss_for(spec_.task), predict(x), targets).mean_loss;
}

double Network::accumulate_gradients(const Matrix& x, const Matrix& targets, double keep_probability, Rng& rng) {
  Matrix input = x;
  if (keep_probability < 1.0) input = DropoutMask::sample(x.rows(), x.cols(), keep_probability, rng).apply(x);

  ProjectionLayer::Cache proj_cache;
  Matrix h = projection_.forward(input, proj_cache);

  std::vector<TunnelLayer::Cache> tunnel_caches(tunnels_.size());
  std::vector<HighwayLayer::Cache> highway_caches(highways_.size());
  std::vector<PerceptronLayer::Cache> mlp_caches(mlp_.size());
  BuddingCache tree_cache;
  for (std::size_t l = 0; l < tunnels_.size(); ++l) h = tunnels_[l].forward(h, tunnel_caches[l]);
  for (std::size_t l = 0; l < highways_.size(); ++l) h = highways_[l].forward(h, highway_caches[l]);
  for (std::size_t l = 0; l < mlp_.size(); ++l) h = mlp_[l].forward(h, mlp_caches[l]);
  if (tree_) h = tree_->forward(h, tree_cache);

  PerceptronLayer::Cache out_cache;
  const Matrix z = output_.forward(h, out_cache);
  const BatchLoss bl = batch_loss_and_grad(loss_for(spec_.task), output_head_forward(head_for(spec_.task), z), targets);

  Matrix d = output_.backward(out_cache, bl.dlogits);
  if (tree_) d = tree_->backward(tree_cache, d, rng);
  for (std::size_t l = mlp_.size(); l-- > 0;) d = mlp_[l].backward(mlp_caches[l], d);
  for (std::size_t l = highways_.size(); l-- > 0;) d = highways_[l].backward(highway_caches[l], d);
  for (std::size_t l = tunnels_.size(); l-- > 0;) d = tunnels_[l].backward(tunnel_caches[l], d);
  projection_.backward(proj_cache, d, false);
  return bl.mean_loss;
}

std::vector<ParamPtr> Network::parameters() const {
  std::vector<ParamPtr> out{projection_.weight()};
  for (const auto& l : tunnels_) {
    out.push_back(l.inner().weight());
    out.push_back(l.inner().bias());
    out.push_back(l.gate());
  }
  for (const auto& l : highways_) {
    out.push_back(l.inner().weight());
    out.push_back(l.inner().bias());
    out.push_back(l.gate_weight());
    out.push_back(l.gate_bias());
  }
  for (const auto& l : mlp_) {
    out.push_back(l.weight());
    out.push_back(l.bias());
  }
  if (tree_) {
    for (auto& p : tree_->parameters()) out.push_back(p);
  }
  out.push_back(output_.weight());
  out.push_back(output_.bias());
  return out;
}

void Network::zero_grad() const {
  for (const auto& p : parameters()) p->zero_grad();
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->count();
  return n;
}

int Network::after_step(Rng& rng) { return tree_ ? tree_->grow(rng) : 0; }

std::optional<SoftSizes> Network::soft_sizes(const Matrix& inputs) const {
  switch (spec_.architecture) {
    case Architecture::tunnel: return tunnel_soft_sizes(tunnels_);
    case Architecture::highway: return highway_soft_sizes(highways_, projection_.forward(inputs));
    case Architecture::budding: {
      SoftSizes s;
      s.total = tree_->soft_size();
      return s;
    }
    case Architecture::mlp: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<int> Network::hard_size() const {
  if (!tree_) return std::nullopt;
  return tree_->hard_size();
}

int Network::refused_growths() const { return tree_ ? tree_->refused_growths() : 0; }

Network Network::pruned() const {
  Network copy(*this);
  if (copy.tree_) copy.tree_ = prune_for_export(*tree_);
  return copy;
}

// ---------------------------------------------------------------------------
// JSON

json matrix_to_json(const Matrix& m) {
  return json{{"shape", {m.rows(), m.cols()}}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) throw ParseError("tensor record needs shape and data");
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw ParseError("tensor shape must have two entries");
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != shape[0] * shape[1]) {
    throw ParseError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     std::to_string(shape[0]) + "x" + std::to_string(shape[1]));
  }
  return Matrix(shape[0], shape[1], std::move(data));
}

namespace {

json param_to_json(const Parameter& p, bool with_state) {
  json j = matrix_to_json(p.value);
  if (with_state && p.adam.t > 0) {
    j["adam"] = {{"t", p.adam.t}, {"m", p.adam.m.data()}, {"v", p.adam.v.data()}};
  }
  return j;
}

ParamPtr param_from_json(const json& j, ParamRole role, int depth) {
  auto p = make_param(role, depth, matrix_from_json(j));
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    p->adam.t = a.at("t").get<std::int64_t>();
    p->adam.m = Matrix(p->value.rows(), p->value.cols(), a.at("m").get<std::vector<double>>());
    p->adam.v = Matrix(p->value.rows(), p->value.cols(), a.at("v").get<std::vector<double>>());
  }
  return p;
}

json layer_to_json(const PerceptronLayer& l, bool with_state) {
  return json{{"W", param_to_json(*l.weight(), with_state)}, {"b", param_to_json(*l.bias(), with_state)}};
}

PerceptronLayer layer_from_json(const json& j, Activation act, int depth) {
  return PerceptronLayer(param_from_json(j.at("W"), ParamRole::weight, depth), param_from_json(j.at("b"), ParamRole::bias, depth),
                         act);
}

json node_to_json(const BuddingNode& n, bool tied, bool with_state) {
  json j{{"depth", n.depth}, {"gamma", param_to_json(*n.gamma, with_state)}, {"tied", tied}};
  if (!tied) {
    j["W"] = param_to_json(*n.layer.weight(), with_state);
    j["b"] = param_to_json(*n.layer.bias(), with_state);
  }
  if (n.has_children()) {
    j["left"] = node_to_json(*n.left, n.left_tied, with_state);
    j["right"] = node_to_json(*n.right, false, with_state);
  }
  return j;
}

std::unique_ptr<BuddingNode> node_from_json(const json& j, const PerceptronLayer* parent, Activation act, int expected_depth) {
  auto n = std::make_unique<BuddingNode>();
  n->depth = j.at("depth").get<int>();
  if (n->depth != expected_depth) throw ParseError("budding node depth " + std::to_string(n->depth) + " where " + std::to_string(expected_depth) + " expected");
  n->gamma = param_from_json(j.at("gamma"), ParamRole::gamma, n->depth);
  if (n->gamma->value.size() != 1) throw ParseError("budding node gamma must be a scalar");
  const bool tied = j.at("tied").get<bool>();
  if (tied) {
    if (parent == nullptr) throw ParseError("budding root cannot be tied");
    n->layer = *parent;
  } else {
    n->layer = PerceptronLayer(param_from_json(j.at("W"), ParamRole::weight, n->depth),
                               param_from_json(j.at("b"), ParamRole::bias, n->depth), act);
  }
  const bool has_left = j.contains("left"), has_right = j.contains("right");
  if (has_left != has_right) throw ParseError("budding node must have both children or neither");
  if (has_left) {
    n->left = node_from_json(j.at("left"), &n->layer, act, n->depth + 1);
    n->left_tied = j.at("left").at("tied").get<bool>();
    n->right = node_from_json(j.at("right"), nullptr, act, n->depth + 1);
    if (n->right->layer.weight() == n->layer.weight()) throw ParseError("right child cannot be tied");
  }
  return n;
}

}  // namespace

json network_to_json(const Network& net, bool include_optimizer_state) {
  const NetworkSpec& s = net.spec_;
  json j{{"architecture", std::string(to_string(s.architecture))},
         {"task", std::string(to_string(s.task))},
         {"input_dim", s.input_dim},
         {"width", s.width},
         {"output_dim", s.output_dim},
         {"layers", s.layers},
         {"max_depth", s.max_depth},
         {"activation", std::string(to_string(s.activation))},
         {"highway_gate_bias", s.highway_gate_bias},
         {"projection", {{"W", param_to_json(*net.projection_.weight(), include_optimizer_state)}}},
         {"output", layer_to_json(net.output_, include_optimizer_state)}};
  json hidden = json::array();
  for (const auto& l : net.tunnels_) {
    json e = layer_to_json(l.inner(), include_optimizer_state);
    e["g"] = param_to_json(*l.gate(), include_optimizer_state);
    hidden.push_back(std::move(e));
  }
  for (const auto& l : net.highways_) {
    json e = layer_to_json(l.inner(), include_optimizer_state);
    e["gate_W"] = param_to_json(*l.gate_weight(), include_optimizer_state);
    e["gate_b"] = param_to_json(*l.gate_bias(), include_optimizer_state);
    hidden.push_back(std::move(e));
  }
  for (const auto& l : net.mlp_) hidden.push_back(layer_to_json(l, include_optimizer_state));
  j["hidden"] = std::move(hidden);
  if (net.tree_) {
    j["tree"] = node_to_json(net.tree_->root(), false, include_optimizer_state);
    j["refused_growths"] = net.tree_->refused_growths();
  }
  return j;
}

Network network_from_json(const json& j) {
  try {
    Network net;
    NetworkSpec& s = net.spec_;
    s.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    s.task = task_from_string(j.at("task").get<std::string>());
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.width = j.at("width").get<std::size_t>();
    s.output_dim = j.at("output_dim").get<std::size_t>();
    s.layers = j.at("layers").get<int>();
    s.max_depth = j.at("max_depth").get<int>();
    s.activation = activation_from_string(j.at("activation").get<std::string>());
    s.highway_gate_bias = j.at("highway_gate_bias").get<double>();

    net.projection_ = ProjectionLayer(param_from_json(j.at("projection").at("W"), ParamRole::weight, 0));
    if (net.projection_.input_dim() != s.input_dim || net.projection_.width() != s.width) {
      throw ParseError("projection shape does not match input_dim/width");
    }
    net.output_ = layer_from_json(j.at("output"), Activation::identity, 0);
    if (net.output_.in_width() != s.width || net.output_.out_width() != s.output_dim) {
      throw ParseError("output layer shape does not match width/output_dim");
    }
    const json& hidden = j.at("hidden");
    if (s.architecture != Architecture::budding && hidden.size() != static_cast<std::size_t>(s.layers)) {
      throw ParseError("hidden layer count does not match 'layers'");
    }
    int depth = 1;
    for (const json& e : hidden) {
      PerceptronLayer inner = layer_from_json(e, s.activation, depth);
      if (inner.in_width() != s.width || inner.out_width() != s.width) throw ParseError("hidden layer is not width x width");
      switch (s.architecture) {
        case Architecture::tunnel:
          net.tunnels_.emplace_back(std::move(inner), param_from_json(e.at("g"), ParamRole::tunnel_gate, depth));
          break;
        case Architecture::highway:
          net.highways_.emplace_back(std::move(inner), param_from_json(e.at("gate_W"), ParamRole::highway_gate_weight, depth),
                                     param_from_json(e.at("gate_b"), ParamRole::highway_gate_bias, depth));
          break;
        case Architecture::mlp:
          net.mlp_.push_back(std::move(inner));
          break;
        case Architecture::budding:
          throw ParseError("budding checkpoint must not have hidden layers");
      }
      ++depth;
    }
    if (s.architecture == Architecture::budding) {
      net.tree_.emplace(s.width, s.max_depth, s.activation, node_from_json(j.at("tree"), nullptr, s.activation, 0));
      net.tree_->set_refused_growths(j.value("refused_growths", 0));
    }
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed network record: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("inconsistent network record: ") + e.what());
  }
}

}  // namespace ccnn
