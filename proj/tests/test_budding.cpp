#include <cmath>
#include <functional>

#include "ccnn/budding.hpp"
#include "doctest.h"
#include "random_nets.hpp"

using namespace ccnn;
using testing_support::random_matrix;

namespace {

void fill_layer(PerceptronLayer& l, double w, double b) {
  l.weight()->value.fill(w);
  l.bias()->value.fill(b);
}

void randomize(BuddingTree& t, Rng& rng) {
  for (const auto& p : t.parameters()) {
    if (p->role != ParamRole::gamma) p->value = random_matrix(p->value.rows(), p->value.cols(), rng);
  }
}

// A random tree of depth <= 3 with stale subtrees.
BuddingTree random_tree(Rng& rng, std::size_t k, Activation act = Activation::relu) {
  BuddingTree t(k, 4, act, rng);
  testing_support::shape_tree(t.root(), 4, act, rng);
  randomize(t, rng);
  return t;
}

int brute_path_nodes(const BuddingNode& n) {
  int c = 1;
  if (n.has_children() && n.gamma_value() < 1.0) c += brute_path_nodes(*n.left) + brute_path_nodes(*n.right);
  return c;
}

}  // namespace

TEST_CASE("budding forward examples") {
  Rng rng(1);
  BuddingTree t(3, 5, Activation::relu, rng);
  const Matrix x = random_matrix(4, 3, rng);
  CHECK(t.forward(x) == t.root().layer.forward(x));

  t.root().gamma->value(0, 0) = 0.5;
  REQUIRE(maybe_grow(t.root(), 5, Activation::relu, rng));
  t.root().gamma->value(0, 0) = 0.0;
  const Matrix comp = t.root().right->layer.forward(t.root().layer.forward(x));
  CHECK(t.forward(x) == comp);

  BuddingTree one(1, 3, Activation::relu, rng);
  fill_layer(one.root().layer, 1.0, 0.0);
  one.root().gamma->value(0, 0) = 0.5;
  maybe_grow(one.root(), 3, Activation::relu, rng);
  fill_layer(one.root().right->layer, 1.0, 0.0);
  CHECK(one.forward(Matrix{{2.0}}) == Matrix{{2.0}});
  CHECK_THROWS_AS(one.forward(Matrix{{1.0, 2.0}}), ConfigError);
}

TEST_CASE("leaf and composition equivalence") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    BuddingTree t(4, 5, Activation::relu, rng);
    randomize(t, rng);
    const Matrix x = random_matrix(5, 4, rng);
    CHECK(t.forward(x) == PerceptronLayer(t.root().layer.weight(), t.root().layer.bias(), Activation::relu).forward(x));

    t.root().gamma->value(0, 0) = 0.5;
    maybe_grow(t.root(), 5, Activation::relu, rng);
    randomize(t, rng);
    t.root().gamma->value(0, 0) = 0.0;
    const PerceptronLayer left(t.root().layer.weight(), t.root().layer.bias(), Activation::relu);
    const PerceptronLayer right(t.root().right->layer.weight(), t.root().right->layer.bias(), Activation::relu);
    const Matrix expect = right.forward(left.forward(x));
    const Matrix y = t.forward(x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::fabs(y.data()[i] - expect.data()[i]) <= 1e-12);
  }
}

TEST_CASE("growth") {
  Rng rng(3);
  BuddingTree t(3, 4, Activation::relu, rng);
  CHECK_FALSE(maybe_grow(t.root(), 4, Activation::relu, rng));
  CHECK_FALSE(t.root().has_children());

  t.root().gamma->value(0, 0) = 0.99;
  CHECK(maybe_grow(t.root(), 4, Activation::relu, rng));
  const BuddingNode& r = t.root();
  REQUIRE(r.has_children());
  CHECK(r.left_tied);
  CHECK(r.left->layer.weight() == r.layer.weight());
  CHECK(r.left->layer.bias() == r.layer.bias());
  CHECK(r.right->layer.weight() != r.layer.weight());
  CHECK(r.left->gamma_value() == 1.0);
  CHECK(r.right->gamma_value() == 1.0);
  CHECK(r.left->depth == 1);

  // depth limit: max_depth counts levels
  BuddingTree shallow(3, 1, Activation::relu, rng);
  shallow.root().gamma->value(0, 0) = 0.4;
  CHECK(shallow.grow(rng) == 0);
  CHECK(shallow.root().gamma_value() == 1.0);
  CHECK(shallow.refused_growths() == 1);
  CHECK_FALSE(shallow.root().has_children());
}

TEST_CASE("sizes") {
  Rng rng(4);
  BuddingTree t(2, 5, Activation::relu, rng);
  CHECK(t.soft_size() == 1.0);
  CHECK(t.hard_size() == 1);
  t.root().gamma->value(0, 0) = 0.5;
  maybe_grow(t.root(), 5, Activation::relu, rng);
  t.root().gamma->value(0, 0) = 0.0;
  CHECK(t.soft_size() == 3.0);
  t.root().gamma->value(0, 0) = 0.5;
  CHECK(t.soft_size() == 2.0);
  t.root().gamma->value(0, 0) = 0.3;
  CHECK(t.hard_size() == 3);
  t.root().gamma->value(0, 0) = 1.0;
  CHECK(t.hard_size() == 1);
  CHECK(t.soft_size() == 1.0);
  CHECK(t.node_count() == 3);
}

TEST_CASE("size invariants on random trees") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    BuddingTree t = random_tree(rng, 2);
    const double s = t.soft_size();
    CHECK(s >= 1.0);
    CHECK(s <= t.hard_size() + 1e-12);
    CHECK(t.hard_size() == brute_path_nodes(t.root()));
    CHECK(t.hard_size() <= (1 << t.max_depth()) - 1);
    const bool trivial = !t.root().has_children() || t.root().gamma_value() == 1.0;
    CHECK((s == 1.0) == trivial);
  }
}

TEST_CASE("budding gradients match central differences") {
  Rng rng(6);
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    const std::size_t k = 2 + rng.below(3);
    BuddingTree t = random_tree(rng, k, rng.bernoulli(0.7) ? Activation::relu : Activation::sigmoid);
    const std::size_t b = 1 + rng.below(3);
    auto x = make_param(ParamRole::weight, 0, random_matrix(b, k, rng));
    const Matrix c = random_matrix(b, k, rng);
    auto params = t.parameters();
    for (const auto& p : params) p->zero_grad();
    BuddingCache cache;
    t.forward(x->value, cache);
    x->grad = t.backward(cache, c, rng);
    auto f = [&](oracle::Probe& probe) {
      long double s = 0;
      for (std::size_t r = 0; r < b; ++r) {
        const oracle::Vec y = oracle::budding(t.root(), oracle::Vec(x->value.row(r).begin(), x->value.row(r).end()), probe);
        for (std::size_t j = 0; j < k; ++j) s += c(r, j) * y[j];
      }
      return s;
    };
    oracle::Probe probe;
    f(probe);
    if (probe.min_abs_relu_z < 1e-3) continue;
    params.push_back(x);
    const auto rep = oracle::compare_gradients(params, [&] { return f(probe); });
    if (rep.worst >= 1e-4) MESSAGE(rep.where);
    worst = std::max(worst, rep.worst);
    ++done;
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("tied weights accumulate both uses") {
  Rng rng(7);
  BuddingTree t(3, 3, Activation::sigmoid, rng);
  t.root().gamma->value(0, 0) = 0.5;
  maybe_grow(t.root(), 3, Activation::sigmoid, rng);
  t.root().gamma->value(0, 0) = 0.4;
  const Matrix x = random_matrix(2, 3, rng);
  const Matrix dy = random_matrix(2, 3, rng);

  // Gradient of the shared W through the parent use alone plus the left-child use alone.
  auto grad_of = [&](BuddingTree& tree) {
    for (const auto& p : tree.parameters()) p->zero_grad();
    BuddingCache cache;
    tree.forward(x, cache);
    tree.backward(cache, dy, rng);
    return tree.root().layer.weight()->grad;
  };
  const Matrix tied = grad_of(t);

  BuddingTree untied = t;
  BuddingNode& r = untied.root();
  r.left->layer = PerceptronLayer(make_param(ParamRole::weight, 1, r.layer.weight()->value),
                                  make_param(ParamRole::bias, 1, r.layer.bias()->value), Activation::sigmoid);
  r.left_tied = false;
  const Matrix parent_only = grad_of(untied);
  const Matrix child_only = r.left->layer.weight()->grad;
  for (std::size_t i = 0; i < tied.size(); ++i) {
    CHECK(tied.data()[i] == doctest::Approx(parent_only.data()[i] + child_only.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("off-path children get no gradient") {
  Rng rng(8);
  BuddingTree t(3, 4, Activation::relu, rng);
  t.root().gamma->value(0, 0) = 0.5;
  maybe_grow(t.root(), 4, Activation::relu, rng);
  t.root().gamma->value(0, 0) = 1.0;
  for (const auto& p : t.parameters()) p->zero_grad();
  BuddingCache cache;
  const Matrix x = random_matrix(3, 3, rng);
  t.forward(x, cache);
  t.backward(cache, random_matrix(3, 3, rng), rng);
  const BuddingNode& right = *t.root().right;
  CHECK(right.layer.weight()->grad == Matrix(3, 3));
  CHECK(right.layer.bias()->grad == Matrix(1, 3));
  CHECK(right.gamma->grad == Matrix(1, 1));
  CHECK_FALSE(right.layer.weight()->touched);

  // zero upstream gradient
  for (const auto& p : t.parameters()) p->zero_grad();
  t.root().gamma->value(0, 0) = 0.3;
  t.forward(x, cache);
  const Matrix dx = t.backward(cache, Matrix(3, 3), rng);
  CHECK(dx == Matrix(3, 3));
  for (const auto& p : t.parameters()) CHECK(p->grad == Matrix(p->value.rows(), p->value.cols()));
}

TEST_CASE("backward needs a matching forward") {
  Rng rng(9);
  BuddingTree t(2, 3, Activation::relu, rng);
  BuddingCache empty;
  CHECK_THROWS_AS(t.backward(empty, Matrix(1, 2), rng), UsageError);
  BuddingCache cache;
  t.forward(Matrix(1, 2), cache);
  t.root().gamma->value(0, 0) = 0.5;
  t.grow(rng);
  CHECK_THROWS_AS(t.backward(cache, Matrix(1, 2), rng), UsageError);
}

TEST_CASE("pruning") {
  Rng rng(10);
  BuddingTree t(3, 6, Activation::relu, rng);
  t.root().gamma->value(0, 0) = 0.5;
  maybe_grow(t.root(), 6, Activation::relu, rng);
  t.root().right->gamma->value(0, 0) = 0.5;
  maybe_grow(*t.root().right, 6, Activation::relu, rng);
  t.root().gamma->value(0, 0) = 1.0;
  const BuddingTree p = prune_for_export(t);
  CHECK(p.node_count() == 1);
  const Matrix x = random_matrix(10, 3, rng);
  CHECK(p.forward(x) == t.forward(x));

  t.root().gamma->value(0, 0) = 0.2;
  t.root().right->gamma->value(0, 0) = 0.7;
  const BuddingTree all = prune_for_export(t);
  CHECK(all.node_count() == t.node_count());
  CHECK(all.root().left->layer.weight() == all.root().layer.weight());
  CHECK(all.root().layer.weight() != t.root().layer.weight());

  for (int trial = 0; trial < 100; ++trial) {
    const BuddingTree r = random_tree(rng, 3);
    const BuddingTree q = prune_for_export(r);
    CHECK(q.node_count() == q.hard_size());
    const Matrix xs = random_matrix(100, 3, rng);
    CHECK(q.forward(xs) == r.forward(xs));
  }
}

TEST_CASE("copies keep ties and own their parameters") {
  Rng rng(11);
  BuddingTree t = random_tree(rng, 3);
  t.root().gamma->value(0, 0) = 0.5;
  maybe_grow(t.root(), 4, Activation::relu, rng);
  const BuddingTree c = t;
  CHECK(c.node_count() == t.node_count());
  CHECK(c.root().left->layer.weight() == c.root().layer.weight());
  CHECK(c.root().layer.weight() != t.root().layer.weight());
  CHECK(c.root().layer.weight()->value == t.root().layer.weight()->value);
  const Matrix x = random_matrix(4, 3, rng);
  CHECK(c.forward(x) == t.forward(x));
  std::size_t unique = 0;
  for (const auto& p : c.parameters()) unique += p->count();
  std::function<std::size_t(const BuddingNode&)> ties = [&](const BuddingNode& n) -> std::size_t {
    if (!n.has_children()) return 0;
    return (n.left_tied ? 1 : 0) + ties(*n.left) + ties(*n.right);
  };
  // every tied left child shares W and b with its parent
  CHECK(unique == static_cast<std::size_t>(c.node_count()) * (3 * 3 + 3 + 1) - ties(c.root()) * (3 * 3 + 3));
}
