#include <gtest/gtest.h>

#include <cmath>

#include "gradcredit/autodiff/graph.hpp"
#include "gradcredit/error.hpp"
#include "gradcredit/rng.hpp"

using namespace gradcredit;
using namespace gradcredit::ad;

namespace {

Array random_array(Engine& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Array a = Array::matrix(r, c);
  for (double& v : a.values()) v = scale * standard_normal(rng);
  return a;
}

void expect_grad_matches_fd(const Graph& g, Var root, const std::string& leaf) {
  GradientSet grads = backward(g, root);
  FiniteDiffResult fd = finite_diff_check(g, root, leaf, 1e-5);
  EXPECT_TRUE(fd.degenerate.empty());
  GradCompare c = compare_gradients(grads.at(leaf), fd.estimate, 1e-6, 1e-9);
  EXPECT_TRUE(c.ok) << leaf << " max_rel=" << c.max_rel << " max_abs=" << c.max_abs;
}

}  // namespace

TEST(Autodiff, IdentityGraphReturnsInput) {
  Graph g;
  Var x = g.input("x", Array({2}, std::vector<double>{2, 3}));
  Evaluation ev = g.evaluate();
  EXPECT_EQ(ev[x][0], 2.0);
  EXPECT_EQ(ev[x][1], 3.0);
}

TEST(Autodiff, SumOfZeros) {
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 4}, {7, 2}}) {
    Graph g;
    Var s = g.sum(g.input("x", Array::matrix(r, c, 0.0)));
    EXPECT_EQ(g.value(s)[0], 0.0);
  }
}

TEST(Autodiff, RepeatedEvaluationIsBitIdentical) {
  Engine rng(4);
  Graph g;
  Var x = g.input("x", random_array(rng, 3, 5));
  Var w = g.parameter("w", random_array(rng, 5, 4));
  Var y = g.log(g.softmax_rows(g.tanh(g.affine(x, w))));
  Var root = g.sum(y);
  Bindings b{{"x", random_array(rng, 3, 5)}};
  Evaluation a = g.evaluate(b);
  Evaluation c = g.evaluate(b);
  EXPECT_EQ(a.values, c.values);
  EXPECT_EQ(a[root][0], c[root][0]);
}

TEST(Autodiff, GradientOfSumIsOnes) {
  Engine rng(1);
  Graph g;
  Var x = g.input("x", random_array(rng, 3, 4));
  Var root = g.sum(x);
  GradientSet gs = backward(g, root);
  for (double v : gs.at("x").values()) EXPECT_EQ(v, 1.0);
}

TEST(Autodiff, ConstantRootGivesZeroGradients) {
  Engine rng(2);
  Graph g;
  g.input("x", random_array(rng, 2, 2));
  g.parameter("w", random_array(rng, 2, 3));
  Var root = g.sum(g.constant(Array::matrix(2, 2, 1.5)));
  GradientSet gs = backward(g, root);
  ASSERT_EQ(gs.size(), 2u);
  for (const auto& [name, arr] : gs) {
    for (double v : arr.values()) EXPECT_EQ(v, 0.0) << name;
  }
  EXPECT_EQ(gs.at("w").shape(), (std::vector<std::size_t>{2, 3}));
}

TEST(Autodiff, NonScalarRootIsContractError) {
  Graph g;
  Var x = g.input("x", Array::matrix(2, 2, 1.0));
  EXPECT_THROW(backward(g, x), ContractError);
}

TEST(Autodiff, ShapeMismatchIsConfigError) {
  Graph g;
  Var a = g.input("a", Array::matrix(2, 3, 1.0));
  Var b = g.input("b", Array::matrix(2, 2, 1.0));
  EXPECT_THROW(g.add(a, b), ConfigError);
  EXPECT_THROW(g.affine(a, b), ConfigError);
  EXPECT_THROW(g.evaluate({{"a", Array::matrix(3, 3, 0.0)}}), ConfigError);
}

TEST(Autodiff, NonFiniteValueNamesNode) {
  Graph g;
  Var x = g.input("x", Array::row({1.0, 0.0}));
  try {
    Var y = g.log(x);
    g.label(y, "never");
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
  Graph h;
  Var z = h.input("z", Array::row({1.0, 2.0}));
  h.log(z);
  EXPECT_THROW(h.evaluate({{"z", Array::row({1.0, -1.0})}}), NumericError);
}

TEST(Autodiff, FiniteDiffOfSquare) {
  Graph g;
  Var x = g.input("x", Array::scalar(3.0));
  Var root = g.mul(x, x);
  FiniteDiffResult fd = finite_diff_check(g, root, "x", 1e-5);
  EXPECT_NEAR(fd.estimate[0], 6.0, 1e-9);
}

TEST(Autodiff, FiniteDiffOfLinearFunction) {
  // Dyadic step and coefficients: every intermediate is exact.
  Graph g;
  Var x = g.input("x", Array::row({0.5, -1.25, 2.0}));
  Var c = g.constant(Array::row({3.0, -0.5, 0.25}));
  Var root = g.sum(g.mul(x, c));
  for (double h : {0.5, 0.0625, 0x1p-20}) {
    FiniteDiffResult fd = finite_diff_check(g, root, "x", h);
    EXPECT_EQ(fd.estimate[0], 3.0);
    EXPECT_EQ(fd.estimate[1], -0.5);
    EXPECT_EQ(fd.estimate[2], 0.25);
  }
  // Any step: equal to rounding.
  for (double h : {1e-3, 1e-5, 0.3}) {
    FiniteDiffResult fd = finite_diff_check(g, root, "x", h);
    EXPECT_NEAR(fd.estimate[0], 3.0, 1e-9);
    EXPECT_NEAR(fd.estimate[1], -0.5, 1e-9);
  }
}

TEST(Autodiff, FiniteDiffFlagsVanishingStep) {
  Graph g;
  Var x = g.input("x", Array::scalar(1e10));
  Var root = g.mul(x, x);
  FiniteDiffResult fd = finite_diff_check(g, root, "x", 1e-12);
  EXPECT_EQ(fd.degenerate.size(), 1u);
  EXPECT_THROW(finite_diff_check(g, root, "x", 0.0), ContractError);
}

TEST(Autodiff, RandomTwoLayerNetworksMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Engine rng(substream_seed(seed, "mlp"));
    Graph g;
    Var x = g.input("x", random_array(rng, 4, 5));
    Var w1 = g.parameter("w1", random_array(rng, 5, 6, 0.5));
    Var b1 = g.parameter("b1", random_array(rng, 1, 6, 0.1));
    Var w2 = g.parameter("w2", random_array(rng, 6, 3, 0.5));
    Var b2 = g.parameter("b2", random_array(rng, 1, 3, 0.1));
    Var h = g.tanh(g.affine(x, w1, b1));
    Var lp = g.log(g.softmax_rows(g.affine(h, w2, b2)));
    Var root = g.mean(g.mul(lp, g.constant(random_array(rng, 4, 3))));
    for (const char* leaf : {"x", "w1", "b1", "w2", "b2"}) expect_grad_matches_fd(g, root, leaf);
  }
}

TEST(Autodiff, EveryPrimitiveMatchesFiniteDifferences) {
  Engine rng(11);
  Graph g;
  Var table = g.parameter("table", random_array(rng, 6, 3));
  Var a = g.input("a", random_array(rng, 4, 3));
  Var emb = g.embedding(table, {1, 4, 1, 0});
  Var s = g.add(emb, g.scale(a, -0.7));
  Var att = g.matmul(s, a, true);  // 4x4
  Var sm = g.softmax_rows(att);
  Var mixed = g.matmul(sm, s);      // 4x3
  Var cat = g.concat_cols({mixed, g.slice(emb, 0, 4, 1, 3)});
  Var rows = g.concat_rows({cat, g.pool_rows(cat, {1.0, 0.0, 2.0, 0.5})});
  Var pos = g.add(g.mul(rows, rows), g.constant(Array::matrix(5, 5, 0.1)));
  Var root = g.add(g.sum(g.log(pos)), g.mean(g.tanh(rows)));
  expect_grad_matches_fd(g, root, "table");
  expect_grad_matches_fd(g, root, "a");
}

TEST(Autodiff, BackwardIsLinearInRoot) {
  Engine rng(5);
  Graph g;
  Var x = g.input("x", random_array(rng, 3, 4));
  Var w = g.parameter("w", random_array(rng, 4, 2));
  Var f = g.sum(g.tanh(g.affine(x, w)));
  Var h = g.mean(g.mul(x, x));
  const double a = 1.7, b = -0.3;
  Var combo = g.add(g.scale(f, a), g.scale(h, b));
  GradientSet gf = backward(g, f), gh = backward(g, h), gc = backward(g, combo);
  for (const char* leaf : {"x", "w"}) {
    for (std::size_t i = 0; i < gc.at(leaf).size(); ++i) {
      EXPECT_NEAR(gc.at(leaf)[i], a * gf.at(leaf)[i] + b * gh.at(leaf)[i], 1e-12);
    }
  }
}

TEST(Autodiff, LinearRootGivesExactCoefficients) {
  Engine rng(8);
  Array coef = random_array(rng, 3, 4);
  Graph g;
  Var x = g.input("x", random_array(rng, 3, 4));
  Var root = g.sum(g.mul(x, g.constant(coef)));
  GradientSet gs = backward(g, root);
  EXPECT_EQ(gs.at("x").values().size(), coef.size());
  for (std::size_t i = 0; i < coef.size(); ++i) EXPECT_EQ(gs.at("x")[i], coef[i]);
}

TEST(Autodiff, SharedLeafAccumulates) {
  Graph g;
  Var x = g.input("x", Array::row({1.0, 2.0}));
  Var root = g.sum(g.add(g.scale(x, 2.0), g.scale(x, 3.0)));
  GradientSet gs = backward(g, root);
  EXPECT_EQ(gs.at("x")[0], 5.0);
  EXPECT_EQ(gs.at("x")[1], 5.0);
}

TEST(Autodiff, BackwardCounterAdvancesOncePerPass) {
  Graph g;
  Var root = g.sum(g.input("x", Array::row({1.0})));
  const auto before = backward_pass_count();
  backward(g, root);
  EXPECT_EQ(backward_pass_count(), before + 1);
}

TEST(Autodiff, EmbeddingRejectsOutOfRangeIds) {
  Graph g;
  Var t = g.parameter("t", Array::matrix(3, 2, 1.0));
  EXPECT_THROW(g.embedding(t, {0, 3}), InputError);
}
