#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "ccnn/layers.hpp"

namespace ccnn {

// One node of a budding perceptron:
//   y(x) = (1 - gamma) * right(left(x)) + gamma * act(W x + b)
// Children exist only once gamma has left 1. When left_tied is set, the left
// child's layer shares this node's W and b parameters.
struct BuddingNode {
  PerceptronLayer layer;
  ParamPtr gamma;  // 1 x 1, in [0, 1]
  std::unique_ptr<BuddingNode> left;
  std::unique_ptr<BuddingNode> right;
  bool left_tied = false;
  int depth = 0;
  // Would-be right child of a pure leaf. Used to give gamma a gradient at 1 and
  // promoted to a real child if that gradient pushes gamma below 1.
  std::unique_ptr<PerceptronLayer> pending_right;

  double gamma_value() const { return gamma->value(0, 0); }
  bool has_children() const { return left != nullptr; }
  // The children are on the compute path.
  bool expanded() const { return has_children() && gamma_value() < 1.0; }
};

// Forward cache mirroring the evaluated part of the tree.
struct BuddingCache {
  PerceptronLayer::Cache own;
  std::unique_ptr<BuddingCache> left;
  std::unique_ptr<BuddingCache> right;
  Matrix composed;  // right(left(x)), only when expanded
  bool valid = false;
};

class BuddingTree {
 public:
  BuddingTree() = default;
  // max_depth counts levels: the root alone is depth 1 worth of levels, so a
  // tree never evaluates more than 2^max_depth - 1 nodes.
  BuddingTree(std::size_t width, int max_depth, Activation act, Rng& rng);
  BuddingTree(std::size_t width, int max_depth, Activation act, std::unique_ptr<BuddingNode> root);

  BuddingTree(const BuddingTree& other);
  BuddingTree& operator=(const BuddingTree& other);
  BuddingTree(BuddingTree&&) noexcept = default;
  BuddingTree& operator=(BuddingTree&&) noexcept = default;

  std::size_t width() const { return width_; }
  int max_depth() const { return max_depth_; }
  Activation activation() const { return activation_; }

  BuddingNode& root() { return *root_; }
  const BuddingNode& root() const { return *root_; }

  Matrix forward(const Matrix& x, BuddingCache& cache) const;
  Matrix forward(const Matrix& x) const;
  // Accumulates gradients for every evaluated node (tied parameters receive the
  // sum over both uses) and returns dx. Pure leaves get a gamma gradient measured
  // against their would-be children, drawing a pending right child from rng.
  Matrix backward(const BuddingCache& cache, const Matrix& dy, Rng& rng);

  // Grows every node whose gamma dropped below 1. Nodes that cannot grow
  // (depth limit) are clamped back to gamma = 1 and counted as refusals.
  int grow(Rng& rng);
  int refused_growths() const { return refused_growths_; }
  void set_refused_growths(int n) { refused_growths_ = n; }

  double soft_size() const;
  int hard_size() const;
  int node_count() const;  // every materialized node, on path or not

  // Unique trainable parameters (tied tensors appear once).
  std::vector<ParamPtr> parameters() const;
  // gamma parameters of nodes on the evaluated compute path.
  std::vector<ParamPtr> path_gammas() const;

  bool can_grow(const BuddingNode& node) const { return node.depth + 1 < max_depth_; }

 private:
  std::size_t width_ = 0;
  int max_depth_ = 1;
  Activation activation_ = Activation::relu;
  std::unique_ptr<BuddingNode> root_;
  int refused_growths_ = 0;
};

std::unique_ptr<BuddingNode> make_budding_leaf(std::size_t width, Activation act, int depth, Rng& rng);

// Free-function spellings of the tree operations on a single node.
double soft_size(const BuddingNode& node);
int hard_size(const BuddingNode& node);
// Materializes both children of `node` (left tied, right fresh or the pending
// one) if gamma < 1 and the depth limit allows; resets gamma to 1 when it does
// not. Returns whether growth happened.
bool maybe_grow(BuddingNode& node, int max_depth, Activation act, Rng& rng, int* refusals = nullptr);

// Copy with every subtree behind a gamma = 1 node removed.
BuddingTree prune_for_export(const BuddingTree& tree);

}  // namespace ccnn
