#include "ccnn/budding.hpp"

#include <set>
#include <string>

namespace ccnn {

namespace {

ParamPtr copy_param(const ParamPtr& p) { return std::make_shared<Parameter>(*p); }

PerceptronLayer copy_layer(const PerceptronLayer& l) {
  return PerceptronLayer(copy_param(l.weight()), copy_param(l.bias()), l.activation());
}

// Deep copy. A tied left child is rebuilt on top of the copied parent layer so
// that the alias survives the copy. `keep_off_path` controls whether subtrees
// behind gamma = 1 are retained.
std::unique_ptr<BuddingNode> clone_node(const BuddingNode& n, const PerceptronLayer* tied_layer, bool keep_off_path) {
  auto out = std::make_unique<BuddingNode>();
  out->layer = tied_layer != nullptr ? *tied_layer : copy_layer(n.layer);
  out->gamma = copy_param(n.gamma);
  out->depth = n.depth;
  if (n.has_children() && (keep_off_path || n.expanded())) {
    out->left_tied = n.left_tied;
    out->left = clone_node(*n.left, n.left_tied ? &out->layer : nullptr, keep_off_path);
    out->right = clone_node(*n.right, nullptr, keep_off_path);
  }
  if (keep_off_path && n.pending_right) out->pending_right = std::make_unique<PerceptronLayer>(copy_layer(*n.pending_right));
  return out;
}

Matrix blend_gamma(double gamma, const Matrix& own, const Matrix& composed) {
  Matrix y(own.rows(), own.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = (1.0 - gamma) * composed.data()[i] + gamma * own.data()[i];
  return y;
}

Matrix forward_node(const BuddingNode& n, const Matrix& x, BuddingCache* cache) {
  if (cache == nullptr) {
    Matrix a = n.layer.forward(x);
    if (!n.expanded()) return a;
    Matrix c = forward_node(*n.right, forward_node(*n.left, x, nullptr), nullptr);
    return blend_gamma(n.gamma_value(), a, c);
  }
  Matrix a = n.layer.forward(x, cache->own);
  cache->valid = true;
  if (!n.expanded()) {
    cache->left.reset();
    cache->right.reset();
    cache->composed = Matrix();
    return a;
  }
  cache->left = std::make_unique<BuddingCache>();
  cache->right = std::make_unique<BuddingCache>();
  Matrix h = forward_node(*n.left, x, cache->left.get());
  cache->composed = forward_node(*n.right, h, cache->right.get());
  return blend_gamma(n.gamma_value(), a, cache->composed);
}

// Output of the would-be children of a pure leaf: the tied left child reproduces
// this node's own activation, so only the right child needs evaluating.
Matrix phantom_composition(BuddingNode& n, const Matrix& x, const Matrix& own, int max_depth, Rng& rng) {
  if (n.has_children()) return forward_node(*n.right, forward_node(*n.left, x, nullptr), nullptr);
  if (n.depth + 1 >= max_depth) return Matrix();
  if (!n.pending_right) {
    n.pending_right = std::make_unique<PerceptronLayer>(n.layer.in_width(), n.layer.out_width(),
                                                        n.layer.activation(), rng, n.depth + 1);
  }
  return n.pending_right->forward(own);
}

Matrix backward_node(BuddingNode& n, const BuddingCache& cache, const Matrix& dy, int max_depth, Rng& rng) {
  if (!cache.valid || !cache.own.valid) throw UsageError("BuddingTree: backward called without a matching forward");
  if (dy.rows() != cache.own.x.rows() || dy.cols() != n.layer.out_width()) {
    throw UsageError("BuddingTree: upstream gradient shape does not match the cached forward pass");
  }
  const double gamma = n.gamma_value();
  const Matrix& own = cache.own.a;
  const bool expanded = n.expanded();
  if (expanded && (!cache.left || !cache.right)) {
    throw UsageError("BuddingTree: cache is stale (tree structure changed since forward)");
  }

  Matrix composed = expanded ? cache.composed : phantom_composition(n, cache.own.x, own, max_depth, rng);
  Matrix dgamma(1, 1);
  if (!composed.empty()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dy.size(); ++i) acc += dy.data()[i] * (own.data()[i] - composed.data()[i]);
    dgamma(0, 0) = acc;
  }
  n.gamma->accumulate(dgamma);

  Matrix dx = n.layer.backward(cache.own, dy * gamma);
  if (expanded) {
    Matrix dh = backward_node(*n.right, *cache.right, dy * (1.0 - gamma), max_depth, rng);
    dx += backward_node(*n.left, *cache.left, dh, max_depth, rng);
  }
  return dx;
}

void collect_params(const BuddingNode& n, std::set<const Parameter*>& seen, std::vector<ParamPtr>& out) {
  for (const ParamPtr& p : {n.layer.weight(), n.layer.bias(), n.gamma}) {
    if (seen.insert(p.get()).second) out.push_back(p);
  }
  if (n.has_children()) {
    collect_params(*n.left, seen, out);
    collect_params(*n.right, seen, out);
  }
}

void collect_path_gammas(const BuddingNode& n, std::vector<ParamPtr>& out) {
  out.push_back(n.gamma);
  if (n.expanded()) {
    collect_path_gammas(*n.left, out);
    collect_path_gammas(*n.right, out);
  }
}

int count_nodes(const BuddingNode& n) {
  return 1 + (n.has_children() ? count_nodes(*n.left) + count_nodes(*n.right) : 0);
}

int grow_all(BuddingNode& n, int max_depth, Activation act, Rng& rng, int& refusals) {
  int grown = maybe_grow(n, max_depth, act, rng, &refusals) ? 1 : 0;
  if (n.has_children()) {
    grown += grow_all(*n.left, max_depth, act, rng, refusals);
    grown += grow_all(*n.right, max_depth, act, rng, refusals);
  }
  return grown;
}

}  // namespace

std::unique_ptr<BuddingNode> make_budding_leaf(std::size_t width, Activation act, int depth, Rng& rng) {
  auto n = std::make_unique<BuddingNode>();
  n->layer = PerceptronLayer(width, width, act, rng, depth);
  n->gamma = make_param(ParamRole::gamma, depth, Matrix(1, 1, 1.0));
  n->depth = depth;
  return n;
}

double soft_size(const BuddingNode& node) {
  if (!node.has_children()) return 1.0;
  return 1.0 + (1.0 - node.gamma_value()) * (soft_size(*node.left) + soft_size(*node.right));
}

int hard_size(const BuddingNode& node) {
  if (!node.expanded()) return 1;
  return 1 + hard_size(*node.left) + hard_size(*node.right);
}

bool maybe_grow(BuddingNode& node, int max_depth, Activation act, Rng& rng, int* refusals) {
  if (node.has_children() || node.gamma_value() >= 1.0) return false;
  if (node.depth + 1 >= max_depth) {
    node.gamma->value(0, 0) = 1.0;
    node.pending_right.reset();
    if (refusals != nullptr) ++*refusals;
    return false;
  }
  const int child_depth = node.depth + 1;
  auto left = std::make_unique<BuddingNode>();
  left->layer = node.layer;
  left->gamma = make_param(ParamRole::gamma, child_depth, Matrix(1, 1, 1.0));
  left->depth = child_depth;

  auto right = std::make_unique<BuddingNode>();
  right->layer = node.pending_right ? std::move(*node.pending_right)
                                    : PerceptronLayer(node.layer.in_width(), node.layer.out_width(), act, rng, child_depth);
  right->gamma = make_param(ParamRole::gamma, child_depth, Matrix(1, 1, 1.0));
  right->depth = child_depth;
  node.pending_right.reset();

  node.left = std::move(left);
  node.right = std::move(right);
  node.left_tied = true;
  return true;
}

BuddingTree::BuddingTree(std::size_t width, int max_depth, Activation act, Rng& rng)
    : BuddingTree(width, max_depth, act, make_budding_leaf(width, act, 0, rng)) {}

BuddingTree::BuddingTree(std::size_t width, int max_depth, Activation act, std::unique_ptr<BuddingNode> root)
    : width_(width), max_depth_(max_depth), activation_(act), root_(std::move(root)) {
  if (width_ == 0) throw ConfigError("BuddingTree: width must be positive");
  if (max_depth_ < 1) throw ConfigError("BuddingTree: max_depth must be at least 1");
  if (!root_) throw ConfigError("BuddingTree: null root");
  if (root_->layer.in_width() != width_ || root_->layer.out_width() != width_) {
    throw ConfigError("BuddingTree: root layer must be " + std::to_string(width_) + " x " + std::to_string(width_));
  }
}

BuddingTree::BuddingTree(const BuddingTree& other)
    : width_(other.width_),
      max_depth_(other.max_depth_),
      activation_(other.activation_),
      root_(other.root_ ? clone_node(*other.root_, nullptr, true) : nullptr),
      refused_growths_(other.refused_growths_) {}

BuddingTree& BuddingTree::operator=(const BuddingTree& other) {
  if (this != &other) *this = BuddingTree(other);
  return *this;
}

Matrix BuddingTree::forward(const Matrix& x, BuddingCache& cache) const {
  if (x.cols() != width_) throw ConfigError("BuddingTree: input width " + std::to_string(x.cols()) + " != " + std::to_string(width_));
  return forward_node(*root_, x, &cache);
}

Matrix BuddingTree::forward(const Matrix& x) const {
  if (x.cols() != width_) throw ConfigError("BuddingTree: input width " + std::to_string(x.cols()) + " != " + std::to_string(width_));
  return forward_node(*root_, x, nullptr);
}

Matrix BuddingTree::backward(const BuddingCache& cache, const Matrix& dy, Rng& rng) {
  return backward_node(*root_, cache, dy, max_depth_, rng);
}

int BuddingTree::grow(Rng& rng) { return grow_all(*root_, max_depth_, activation_, rng, refused_growths_); }

double BuddingTree::soft_size() const { return ccnn::soft_size(*root_); }
int BuddingTree::hard_size() const { return ccnn::hard_size(*root_); }
int BuddingTree::node_count() const { return count_nodes(*root_); }

std::vector<ParamPtr> BuddingTree::parameters() const {
  std::set<const Parameter*> seen;
  std::vector<ParamPtr> out;
  collect_params(*root_, seen, out);
  return out;
}

std::vector<ParamPtr> BuddingTree::path_gammas() const {
  std::vector<ParamPtr> out;
  collect_path_gammas(*root_, out);
  return out;
}

BuddingTree prune_for_export(const BuddingTree& tree) {
  return BuddingTree(tree.width(), tree.max_depth(), tree.activation(), clone_node(tree.root(), nullptr, false));
}

}  // namespace ccnn
