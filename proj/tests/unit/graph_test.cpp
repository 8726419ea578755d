#include <gtest/gtest.h>

#include <cmath>

#include "binadapt/error.hpp"
#include "binadapt/graph.hpp"
#include "oracles.hpp"

using namespace binadapt;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kEpsilon = 1e-5;

}  // namespace

TEST(GraphForward, IdentityGraph) {
  Graph g;
  g.set_output("y", g.input("x"));
  auto out = g.forward({{"x", Tensor::vector({1, 2, 3})}});
  EXPECT_TRUE(bitwise_equal(out.at("y"), Tensor::vector({1, 2, 3})));
}

TEST(GraphForward, SigmoidOfZero) {
  Graph g;
  g.set_output("y", g.sigmoid("s", g.input("x")));
  EXPECT_EQ(g.forward({{"x", Tensor::vector({0.0})}}).at("y")[0], 0.5);
}

TEST(GraphForward, ReluOfConvMatchesDirectLoops) {
  Rng rng(21);
  ConvSpec s = ConvSpec::same(1, 2, 3);
  Tensor w = oracle::random_tensor(s.conv_weight_shape(), rng);
  Tensor b = oracle::random_tensor({2}, rng);
  Tensor x = oracle::random_tensor({1, 4, 4}, rng);
  Graph g;
  NodeId c = g.conv2d("conv", g.input("x"), g.parameter("w", w), g.parameter("b", b), s);
  g.set_output("y", g.relu("relu", c));
  Tensor out = g.forward({{"x", x}}).at("y");
  Tensor ref = oracle::direct_conv(x, s, w, b);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], std::max(ref[i], 0.0), 1e-13);
}

TEST(GraphForward, UnboundInputThrows) {
  Graph g;
  g.set_output("y", g.relu("r", g.input("x")));
  EXPECT_THROW(g.forward({}), GraphError);
}

TEST(GraphForward, ShapeErrorNamesTheNode) {
  Graph g;
  g.set_output("y", g.add("joint", g.input("a"), g.input("b")));
  try {
    g.forward({{"a", Tensor({2})}, {"b", Tensor({3})}});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("joint"), std::string::npos);
  }
}

TEST(GraphForward, RepeatedForwardIsBitIdentical) {
  Rng rng(2);
  ConvSpec s = ConvSpec::same(1, 2, 3);
  Graph g;
  NodeId c = g.conv2d("conv", g.input("x"), g.parameter("w", oracle::random_tensor(s.conv_weight_shape(), rng)),
                      g.parameter("b", Tensor({2}, 0.1)), s);
  g.set_output("y", g.dropout("drop", g.relu("r", c), 0.3));
  Tensor x = oracle::random_tensor({1, 6, 6}, rng);
  ForwardOptions opt;
  opt.mode = Mode::kTraining;
  opt.seed = 77;
  Tensor a = g.forward({{"x", x}}, opt).at("y");
  Tensor b = g.forward({{"x", x}}, opt).at("y");
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(GraphForward, DuplicateNodeNameThrows) {
  Graph g;
  g.input("x");
  EXPECT_THROW(g.input("x"), GraphError);
}

TEST(GraphBackward, SumGivesOnes) {
  Graph g;
  g.set_output("loss", g.sum("s", g.parameter("x", Tensor({3}, 2.0))));
  g.forward({});
  GradientSet grads = g.backward("loss");
  for (double v : grads.at("x").values()) EXPECT_EQ(v, 1.0);
}

TEST(GraphBackward, ReversalFlipsSign) {
  Graph g;
  NodeId r = g.gradient_reversal("grl", g.parameter("x", Tensor::vector({3.0, -1.0})), {0.1});
  g.set_output("loss", g.sum("s", r));
  g.forward({});
  GradientSet grads = g.backward("loss");
  EXPECT_EQ(grads.at("x")[0], -0.1);
  EXPECT_EQ(grads.at("x")[1], -0.1);
}

TEST(GraphBackward, ReversalEqualsNegatedIdentityExactly) {
  Rng rng(8);
  const double lambda = 0.37;
  Tensor p0 = oracle::random_tensor({1, 5, 5}, rng);
  auto build = [&](bool reversed) {
    Graph g;
    NodeId p = g.parameter("p", p0);
    NodeId mid = reversed ? g.gradient_reversal("grl", p, {lambda}) : g.scale("id", p, 1.0);
    g.set_output("loss", g.sum("s", g.sigmoid("sig", mid)));
    return g;
  };
  Graph plain = build(false), flipped = build(true);
  plain.forward({});
  flipped.forward({});
  const Tensor a = plain.backward("loss").at("p");
  const Tensor b = flipped.backward("loss").at("p");
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], -lambda * a[i]);
}

TEST(GraphBackward, SigmoidSlopeAtZero) {
  Graph g;
  g.set_output("loss", g.sum("s", g.sigmoid("sig", g.parameter("x", Tensor::vector({0.0})))));
  g.forward({});
  EXPECT_EQ(g.backward("loss").at("x")[0], 0.25);
}

TEST(GraphBackward, TwoPathsAccumulate) {
  // loss = sum(3x) + sum(relu(x)) at x > 0 has gradient 3 + 1 per element.
  Graph g;
  NodeId x = g.parameter("x", Tensor::vector({0.5, 2.0}));
  NodeId a = g.sum("sa", g.scale("three", x, 3.0));
  NodeId b = g.sum("sb", g.relu("r", x));
  g.set_output("loss", g.add("total", a, b));
  g.forward({});
  GradientSet grads = g.backward("loss");
  EXPECT_EQ(grads.at("x")[0], 4.0);
  EXPECT_EQ(grads.at("x")[1], 4.0);
}

TEST(GraphBackward, NonScalarLossThrows) {
  Graph g;
  NodeId x = g.parameter("x", Tensor({3}, 1.0));
  g.set_output("y", g.relu("r", x));
  g.forward({});
  EXPECT_THROW(g.backward("y"), GraphError);
}

TEST(GraphBackward, BeforeForwardThrows) {
  Graph g;
  g.set_output("loss", g.sum("s", g.parameter("x", Tensor({3}, 1.0))));
  EXPECT_THROW(g.backward("loss"), GraphError);
}

TEST(GradCheck, LinearGraphIsExact) {
  Rng rng(4);
  Graph g;
  NodeId x = g.parameter("x", oracle::random_tensor({6}, rng));
  g.set_output("loss", g.sum("s", g.scale("k", x, 2.5)));
  EXPECT_LT(grad_check(g, {}, "loss", "x", kEpsilon).max_relative_error, 1e-8);
}

TEST(GradCheck, BceOfSigmoidConv) {
  Rng rng(6);
  ConvSpec s = ConvSpec::same(1, 1, 3);
  Graph g;
  NodeId c = g.conv2d("conv", g.input("x"), g.parameter("w", oracle::random_tensor(s.conv_weight_shape(), rng)),
                      g.parameter("b", Tensor({1}, 0.0)), s);
  g.set_output("loss", g.binary_cross_entropy("bce", g.sigmoid("sig", c), g.input("t")));
  Tensor t({1, 4, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(rng.index(2));
  Bindings b{{"x", oracle::random_tensor({1, 4, 4}, rng)}, {"t", t}};
  EXPECT_LT(grad_check(g, b, "loss", "w", kEpsilon).max_relative_error, kGradTolerance);
  EXPECT_LT(grad_check(g, b, "loss", "b", kEpsilon).max_relative_error, kGradTolerance);
}

// A nonlinearity after the reduction: the check falls back to differencing
// the scalar loss.
TEST(GradCheck, NonlinearScalarTail) {
  Rng rng(9);
  Graph g;
  const NodeId x = g.parameter("x", oracle::random_tensor({2, 3, 3}, rng));
  g.set_output("loss", g.sigmoid("squash", g.sum("total", g.scale("half", x, 0.5))));
  EXPECT_LT(grad_check(g, {}, "loss", "x", kEpsilon).max_relative_error, kGradTolerance);
}

// Weighted combination of two reductions, as in the adversarial objective.
TEST(GradCheck, WeightedSumOfLosses) {
  Rng rng(10);
  Graph g;
  const NodeId x = g.parameter("x", oracle::random_tensor({1, 4, 4}, rng));
  Tensor t({1, 4, 4});
  for (double& v : t.values()) v = static_cast<double>(rng.index(2));
  const NodeId p = g.sigmoid("p", x);
  const NodeId a = g.binary_cross_entropy("a", p, g.input("t"));
  const NodeId b = g.sum("b", g.relu("r", x));
  g.set_output("loss", g.add("loss", a, g.scale("w", b, 0.5)));
  EXPECT_LT(grad_check(g, {{"t", t}}, "loss", "x", kEpsilon).max_relative_error, kGradTolerance);
}

TEST(GradCheck, EpsilonOutOfRangeThrows) {
  Graph g;
  g.set_output("loss", g.sum("s", g.parameter("x", Tensor({2}, 1.0))));
  EXPECT_THROW(grad_check(g, {}, "loss", "x", 0.0), InvalidArgument);
  EXPECT_THROW(grad_check(g, {}, "loss", "x", 1e-2), InvalidArgument);
}

// Random single-op graphs wrapped as bce(sigmoid(op(...))) so every op sees a
// non-trivial upstream gradient.
class RandomOpGradCheck : public ::testing::TestWithParam<int> {};

TEST_P(RandomOpGradCheck, MatchesCentralDifferences) {
  const int op = GetParam();
  for (int trial = 0; trial < 15; ++trial) {
    Rng rng(static_cast<std::uint64_t>(1000 * op + trial));
    const std::size_t cin = 1 + rng.index(2), cout = 1 + rng.index(2);
    const std::size_t h = 2 * (2 + rng.index(2)), w = 2 * (2 + rng.index(2));
    Graph g;
    NodeId x = g.parameter("x", oracle::random_tensor({cin, h, w}, rng));
    NodeId y = 0;
    std::vector<std::string> params{"x"};
    switch (op) {
      case 0: {
        ConvSpec s = rng.index(2) ? ConvSpec::same(cin, cout, 3) : ConvSpec::halving(cin, cout, 3, 2);
        y = g.conv2d("op", x, g.parameter("w", oracle::random_tensor(s.conv_weight_shape(), rng)),
                     g.parameter("b", oracle::random_tensor({cout}, rng)), s);
        params = {"x", "w", "b"};
        break;
      }
      case 1: {
        ConvSpec s = ConvSpec::halving(cin, cout, 3, 2);
        y = g.conv2d_transpose("op", x,
                               g.parameter("w", oracle::random_tensor(s.transpose_weight_shape(), rng)),
                               g.parameter("b", oracle::random_tensor({cout}, rng)), s);
        params = {"x", "w", "b"};
        break;
      }
      case 2:
        y = g.relu("op", x);
        break;
      case 3:
        y = g.sigmoid("op", x);
        break;
      case 4:
        y = g.dropout("op", x, 0.3);
        break;
      case 5:
        y = g.add("op", x, g.parameter("z", oracle::random_tensor({cin, h, w}, rng)));
        params = {"x", "z"};
        break;
      case 6:
        y = g.scale("op", x, rng.uniform(-2.0, 2.0));
        break;
      case 7:
        y = g.gradient_reversal("op", x, {rng.uniform(0.0, 1.0)});
        break;
    }
    NodeId p = g.sigmoid("head", y);
    g.set_output("p", p);
    Graph probe = g;
    const Shape ps = probe.forward({}).at("p").shape();
    Tensor t(ps);
    for (double& v : t.values()) v = static_cast<double>(rng.index(2));
    g.set_output("loss", g.binary_cross_entropy("bce", p, g.input("t")));
    ForwardOptions opt;
    opt.mode = Mode::kTraining;
    opt.seed = 5 + static_cast<std::uint64_t>(trial);
    for (const std::string& name : params) {
      const GradCheckResult r = grad_check(g, {{"t", t}}, "loss", name, kEpsilon, opt);
      EXPECT_LT(r.max_relative_error, kGradTolerance)
          << "op " << op << " trial " << trial << " param " << name << " analytic " << r.analytic
          << " numeric " << r.numeric;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, RandomOpGradCheck, ::testing::Range(0, 8));

TEST(GraphShapes, InferWithoutEvaluating) {
  Graph g;
  ConvSpec s = ConvSpec::halving(1, 4, 3, 2);
  NodeId c = g.conv2d("conv", g.input("x"), g.parameter("w", Tensor(s.conv_weight_shape())),
                      g.parameter("b", Tensor({4})), s);
  g.set_output("y", c);
  EXPECT_EQ(g.infer_shapes({{"x", {1, 32, 32}}}).at("y"), (Shape{4, 16, 16}));
}

TEST(GraphForward, NonFiniteOutputThrows) {
  Graph g;
  g.set_output("y", g.scale("k", g.input("x"), 2.0));
  EXPECT_THROW(g.forward({{"x", Tensor::vector({1e308})}}), Error);
}

TEST(GraphForward, OnlyRequestedOutputsAreEvaluated) {
  Graph g;
  NodeId x = g.input("x");
  g.set_output("a", g.relu("ra", x));
  g.set_output("b", g.sigmoid("sb", g.input("other")));
  ForwardOptions opt;
  opt.outputs = {"a"};
  auto out = g.forward({{"x", Tensor::vector({1.0})}}, opt);
  EXPECT_EQ(out.count("a"), 1u);
  EXPECT_EQ(out.count("b"), 0u);
}
