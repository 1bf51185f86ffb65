#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "padst/graph.hpp"

using namespace padst;

namespace {

Parameter<double> random_param(const std::string& name, Shape shape, std::uint64_t seed,
                               double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(shape);
  for (auto& x : t.data()) x = dist(rng);
  return Parameter<double>(name, t);
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
  return random_param("r", std::move(shape), seed).value;
}

// Reduces a non-scalar output to a scalar with fixed random weights.
Var project(Graph<double>& g, Var x, std::uint64_t seed) {
  return g.sum(g.mul(x, g.constant(random_tensor(g.value(x).shape(), seed))));
}

constexpr double kTol = 1e-4;

}  // namespace

TEST(Graph, MatmulGradient) {
  auto a = random_param("a", {3, 4}, 1);
  auto b = random_param("b", {4, 5}, 2);
  auto r = gradcheck::check({&a, &b}, [&](Graph<double>& g) {
    return project(g, g.matmul(g.parameter(a), g.parameter(b)), 3);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, AddMulScaleGradient) {
  auto a = random_param("a", {2, 3}, 4);
  auto b = random_param("b", {2, 3}, 5);
  auto r = gradcheck::check({&a, &b}, [&](Graph<double>& g) {
    Var x = g.add(g.parameter(a), g.mul(g.parameter(a), g.parameter(b)));
    return project(g, g.scale(x, 0.7), 6);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, AddBiasGradient) {
  auto x = random_param("x", {4, 3}, 7);
  auto bias = random_param("bias", {3}, 8);
  auto r = gradcheck::check({&x, &bias}, [&](Graph<double>& g) {
    return project(g, g.add_bias(g.parameter(x), g.parameter(bias)), 9);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, GeluGradient) {
  auto x = random_param("x", {3, 5}, 10, -3, 3);
  auto r = gradcheck::check({&x}, [&](Graph<double>& g) {
    return project(g, g.gelu(g.parameter(x)), 11);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, SoftmaxGradient) {
  auto x = random_param("x", {3, 6}, 12, -2, 2);
  auto r = gradcheck::check({&x}, [&](Graph<double>& g) {
    return project(g, g.softmax_rows(g.parameter(x)), 13);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, LayerNormGradient) {
  auto x = random_param("x", {4, 6}, 14, -2, 2);
  auto gain = random_param("gain", {6}, 15, 0.5, 1.5);
  auto bias = random_param("bias", {6}, 16);
  auto r = gradcheck::check({&x, &gain, &bias}, [&](Graph<double>& g) {
    return project(g, g.layer_norm(g.parameter(x), g.parameter(gain), g.parameter(bias)), 17);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, EmbeddingGradientAccumulatesRepeatedIds) {
  auto table = random_param("table", {5, 3}, 18);
  const std::vector<int> ids{1, 3, 1, 0};
  auto r = gradcheck::check({&table}, [&](Graph<double>& g) {
    return project(g, g.embedding(g.parameter(table), ids), 19);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(table.grad.at(2, c), 0.0);
}

TEST(Graph, EmbeddingRejectsBadId) {
  auto table = random_param("table", {5, 3}, 18);
  Graph<double> g;
  const std::vector<int> ids{5};
  EXPECT_THROW(g.embedding(g.parameter(table), ids), std::out_of_range);
}

TEST(Graph, AttentionGradientMaskedAndCausal) {
  for (bool causal : {false, true}) {
    auto q = random_param("q", {2 * 3, 4}, 20);
    auto k = random_param("k", {2 * 3, 4}, 21);
    auto v = random_param("v", {2 * 3, 4}, 22);
    AttentionSpec spec{2, 3, 3, 2, causal, {3, 2}};
    auto r = gradcheck::check({&q, &k, &v}, [&](Graph<double>& g) {
      return project(g, g.attention(g.parameter(q), g.parameter(k), g.parameter(v), spec), 23);
    });
    EXPECT_LT(r.max_rel_error, kTol) << (causal ? "causal " : "") << r.worst;
  }
}

TEST(Graph, CrossAttentionGradient) {
  auto q = random_param("q", {2 * 2, 4}, 24);
  auto k = random_param("k", {2 * 3, 4}, 25);
  auto v = random_param("v", {2 * 3, 4}, 26);
  AttentionSpec spec{2, 2, 3, 2, false, {1, 3}};
  auto r = gradcheck::check({&q, &k, &v}, [&](Graph<double>& g) {
    return project(g, g.attention(g.parameter(q), g.parameter(k), g.parameter(v), spec), 27);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, MaskedKeysGetNoGradient) {
  auto q = random_param("q", {3, 4}, 28);
  auto k = random_param("k", {3, 4}, 29);
  auto v = random_param("v", {3, 4}, 30);
  AttentionSpec spec{1, 3, 3, 2, false, {2}};
  Graph<double> g;
  g.backward(project(g, g.attention(g.parameter(q), g.parameter(k), g.parameter(v), spec), 31));
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(k.grad.at(2, c), 0.0);
    EXPECT_EQ(v.grad.at(2, c), 0.0);
  }
}

TEST(Graph, CrossEntropyGradientIgnoresPad) {
  auto logits = random_param("logits", {4, 5}, 32, -2, 2);
  const std::vector<int> targets{2, 0, 4, 1};
  auto r = gradcheck::check({&logits}, [&](Graph<double>& g) {
    return g.cross_entropy(g.parameter(logits), targets, 0);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(logits.grad.at(1, c), 0.0);
}

TEST(Graph, CrossEntropyValue) {
  Graph<double> g;
  Var x = g.constant(Tensor<double>::matrix(1, 3, {0.0, 0.0, 0.0}));
  const std::vector<int> t{1};
  EXPECT_NEAR(g.value(g.cross_entropy(x, t, -1))[0], std::log(3.0), 1e-12);
}

TEST(Graph, DropoutGradientWithFixedMask) {
  auto x = random_param("x", {3, 4}, 33);
  auto r = gradcheck::check({&x}, [&](Graph<double>& g) {
    std::mt19937_64 rng(5);
    return project(g, g.dropout(g.parameter(x), 0.5, rng), 34);
  });
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}

TEST(Graph, BackwardTwiceThrows) {
  auto a = random_param("a", {2, 2}, 35);
  Graph<double> g;
  Var loss = g.sum(g.parameter(a));
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), std::logic_error);
}

TEST(Graph, BackwardNeedsScalar) {
  auto a = random_param("a", {2, 2}, 36);
  Graph<double> g;
  EXPECT_THROW(g.backward(g.parameter(a)), ShapeError);
}

TEST(Graph, BackwardVisitsNodesInReverse) {
  auto a = random_param("a", {2, 2}, 37);
  Graph<double> g;
  Var loss = g.sum(g.gelu(g.parameter(a)));
  g.backward(loss);
  const auto& trace = g.backward_trace();
  ASSERT_FALSE(trace.empty());
  EXPECT_EQ(trace.front(), loss.id);
  EXPECT_TRUE(std::is_sorted(trace.rbegin(), trace.rend()));
}

TEST(Graph, ShapeMismatchThrows) {
  Graph<double> g;
  Var a = g.constant(Tensor<double>({2, 3}));
  Var b = g.constant(Tensor<double>({2, 3}));
  EXPECT_THROW(g.matmul(a, b), ShapeError);
  EXPECT_THROW(g.add(a, g.constant(Tensor<double>({3, 2}))), ShapeError);
}

TEST(Tensor, RejectsWrongSizeAndZeroDims) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>({0, 2}), ShapeError);
}

TEST(ParameterSet, RejectsDuplicateNames) {
  ParameterSet<float> ps;
  ps.add("w", Tensor<float>({2}));
  EXPECT_THROW(ps.add("w", Tensor<float>({2})), std::invalid_argument);
  EXPECT_EQ(ps.scalar_count(), 2u);
}

#include "full_model_check.hpp"

TEST(Graph, FullEncoderDualDecoderGradient) {
  auto r = gradcheck::full_model();
  EXPECT_GT(r.checked, 1000u);
  EXPECT_LT(r.max_rel_error, kTol) << r.worst;
}
