#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "ccnn/budding.hpp"
#include "ccnn/layers.hpp"
#include "ccnn/metrics.hpp"
#include "json.hpp"

namespace ccnn {

enum class Architecture { tunnel, highway, budding, mlp };

std::string_view to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);

struct NetworkSpec {
  Architecture architecture = Architecture::tunnel;
  TaskKind task = TaskKind::binary;
  std::size_t input_dim = 2;
  std::size_t width = 10;
  std::size_t output_dim = 1;
  int layers = 10;     // tunnel, highway, mlp
  int max_depth = 20;  // budding
  Activation activation = Activation::relu;
  double highway_gate_bias = HighwayLayer::kDefaultGateBias;
};

// input -> [dropout] -> projection (D -> K) -> hidden body -> linear (K -> C) -> head
//
// Parameter depths feed the per-depth learning-rate scale: the projection and
// output layers sit at depth 0, stacked layer l at depth l + 1, and budding
// nodes at their tree depth.
class Network {
 public:
  Network(const NetworkSpec& spec, Rng& rng);

  // Deep copies; tied budding weights stay tied inside the copy.
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkSpec& spec() const { return spec_; }
  Architecture architecture() const { return spec_.architecture; }
  TaskKind task() const { return spec_.task; }

  // Forward + backward on one batch with gradients accumulated into the
  // parameters. keep_probability < 1 applies input dropout. Returns the mean loss.
  double accumulate_gradients(const Matrix& x, const Matrix& targets, double keep_probability, Rng& rng);
  // Eval-mode logits and probabilities.
  Matrix logits(const Matrix& x) const;
  Matrix predict(const Matrix& x) const;
  // Mean loss of the eval-mode forward pass.
  double loss(const Matrix& x, const Matrix& targets) const;

  void zero_grad() const;
  std::vector<ParamPtr> parameters() const;
  std::size_t parameter_count() const;
  // Budding: grow nodes whose gamma left 1. Returns the number of new node pairs.
  int after_step(Rng& rng);

  // Tunnel: gate sums; highway: gate means over `inputs` (raw, unprojected);
  // budding: total = soft tree size with no per-layer entries; mlp: none.
  std::optional<SoftSizes> soft_sizes(const Matrix& inputs) const;
  std::optional<int> hard_size() const;
  int refused_growths() const;

  // Budding networks lose their off-path subtrees; others are copied unchanged.
  Network pruned() const;

  const ProjectionLayer& projection() const { return projection_; }
  const PerceptronLayer& output() const { return output_; }
  const std::vector<TunnelLayer>& tunnel_layers() const { return tunnels_; }
  const std::vector<HighwayLayer>& highway_layers() const { return highways_; }
  const std::vector<PerceptronLayer>& mlp_layers() const { return mlp_; }
  const BuddingTree& tree() const { return *tree_; }
  BuddingTree& tree() { return *tree_; }

  friend nlohmann::json network_to_json(const Network& net, bool include_optimizer_state);
  friend Network network_from_json(const nlohmann::json& j);

 private:
  Network() = default;
  Matrix body_forward(const Matrix& h) const;

  NetworkSpec spec_;
  ProjectionLayer projection_;
  std::vector<TunnelLayer> tunnels_;
  std::vector<HighwayLayer> highways_;
  std::vector<PerceptronLayer> mlp_;
  std::optional<BuddingTree> tree_;
  PerceptronLayer output_;
};

nlohmann::json network_to_json(const Network& net, bool include_optimizer_state = false);
Network network_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace ccnn
