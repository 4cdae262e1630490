#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "bf/bricks.hpp"
#include "bf/error.hpp"
#include "bf/rng.hpp"

namespace {

namespace br = bf::bricks;
namespace g = bf::graph;
using bf::Array;

TEST(Bricks, NamesAndPaths) {
  EXPECT_THROW(br::Linear("a/b", 1, 1), bf::ContractError);
  EXPECT_THROW(br::Linear("a.b", 1, 1), bf::ContractError);
  EXPECT_THROW(br::Linear("", 1, 1), bf::ContractError);
  br::Mlp mlp("mlp", {2, 4, 3}, {br::ActivationKind::Relu, br::ActivationKind::Softmax});
  mlp.allocate();
  std::vector<std::string> paths;
  for (auto* p : mlp.all_parameters()) paths.push_back(p->path());
  EXPECT_EQ(paths, (std::vector<std::string>{"/mlp/linear_0.W", "/mlp/linear_0.b", "/mlp/linear_1.W",
                                             "/mlp/linear_1.b"}));
  EXPECT_EQ(mlp.parameter_count(), 2u * 4 + 4 + 4 * 3 + 3);
}

TEST(Bricks, AllocateIsIdempotentAndDefaultsToZero) {
  br::Linear lin("lin", 2, 3);
  lin.allocate();
  const auto uid = lin.parameter("W").variable.uid();
  lin.allocate();
  EXPECT_EQ(lin.parameter("W").variable.uid(), uid);
  EXPECT_EQ(lin.parameter("W").value, Array({2, 3}));
  EXPECT_TRUE(lin.parameter("W").variable.has_role(g::Role::Weight));
  EXPECT_TRUE(lin.parameter("b").variable.has_role(g::Role::Bias));
  EXPECT_THROW(lin.parameter("V"), bf::LookupError);
}

TEST(Bricks, ApplyProducesAnnotatedOutput) {
  br::Linear lin("lin", 2, 3);
  lin.allocate();
  auto y = lin.apply(g::input("x", {g::kBatch, 2}));
  EXPECT_EQ(y.dims(), (g::Dims{g::kBatch, 3}));
  EXPECT_TRUE(y.has_role(g::Role::Output));
  EXPECT_EQ(y.brick_path(), "/lin");
}

struct Holder : br::Brick {
  explicit Holder(std::string name) : Brick(std::move(name)) {}
  using Brick::add_child;
};

TEST(Bricks, ChildAttachmentRules) {
  auto child = std::make_shared<br::Linear>("child", 1, 1);
  Holder a("a"), b("b");
  a.add_child(child);
  EXPECT_EQ(child->path(), "/a/child");
  EXPECT_THROW(b.add_child(child), bf::ContractError);
  EXPECT_THROW(a.add_child(std::make_shared<br::Linear>("child", 1, 1)), bf::ContractError);
  a.allocate();
  EXPECT_THROW(a.add_child(std::make_shared<br::Linear>("late", 1, 1)), bf::ContractError);
}

TEST(Bricks, ApplyBeforeAllocateIsAContractError) {
  br::Linear lin("lin", 2, 3);
  EXPECT_THROW(lin.apply(g::input("x", {g::kBatch, 2})), bf::ContractError);
}

TEST(Initialization, ConstantUniformGaussian) {
  bf::Rng rng(1);
  Array a({200, 50});
  br::initialize_array(a, br::Initializer::constant(0.25), rng);
  for (double v : a.values()) ASSERT_EQ(v, 0.25);

  br::initialize_array(a, br::Initializer::uniform(0.1), rng);
  for (double v : a.values()) ASSERT_TRUE(v >= -0.1 && v < 0.1);

  br::initialize_array(a, br::Initializer::gaussian(0.5), rng);
  double sum = 0, sq = 0;
  for (double v : a.values()) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(a.size());
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / n - (sum / n) * (sum / n)), 0.5, 0.02);
}

TEST(Initialization, SparseHasExactlyKNonZerosPerColumn) {
  bf::Rng rng(2);
  Array a({10, 7});
  br::initialize_array(a, br::Initializer::sparse(3, 1.0), rng);
  for (std::size_t c = 0; c < 7; ++c) {
    int nz = 0;
    for (std::size_t r = 0; r < 10; ++r) nz += a[r * 7 + c] != 0.0;
    EXPECT_EQ(nz, 3);
  }
  Array small({2, 2});
  EXPECT_THROW(br::initialize_array(small, br::Initializer::sparse(3, 1.0), rng), bf::ContractError);
}

TEST(Initialization, OrthogonalIsOrthogonal) {
  bf::Rng rng(3);
  for (std::size_t n : {1u, 2u, 5u, 16u}) {
    Array q({n, n});
    br::initialize_array(q, br::Initializer::orthogonal(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < n; ++k) dot += q[k * n + i] * q[k * n + j];
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      }
    }
  }
  Array rect({2, 3});
  EXPECT_THROW(br::initialize_array(rect, br::Initializer::orthogonal(), rng), bf::ContractError);
}

TEST(Initialization, JsonRoundTripAndDeterminism) {
  for (const auto& init : {br::Initializer::constant(1.5), br::Initializer::uniform(0.3),
                           br::Initializer::gaussian(0.2), br::Initializer::sparse(2, 0.4),
                           br::Initializer::orthogonal()}) {
    EXPECT_EQ(br::Initializer::from_json(init.to_json()), init);
  }
  br::Mlp a("m", {3, 3}, {br::ActivationKind::Tanh});
  br::Mlp b("m", {3, 3}, {br::ActivationKind::Tanh});
  a.allocate();
  b.allocate();
  bf::Rng r1(9), r2(9);
  br::initialize(a, br::Initializer::gaussian(1.0), r1);
  br::initialize(b, br::Initializer::gaussian(1.0), r2);
  EXPECT_TRUE(bf::bitwise_equal(a.all_parameters()[0]->value, b.all_parameters()[0]->value));
}

TEST(Bricks, RecurrentRespectsMask) {
  br::SimpleRecurrent rnn("rnn", 2);
  rnn.allocate();
  bf::Rng rng(5);
  rnn.set_weights_init(br::Initializer::gaussian(0.5));
  br::initialize(rnn, rng);
  auto x = g::input("x", {g::kBatch, 3, 2});
  auto mask = g::input("mask", {g::kBatch, 3});
  auto h = rnn.apply(x, mask);
  EXPECT_EQ(h.dims(), (g::Dims{g::kBatch, 3, 2}));
  g::Bindings b;
  b.bind(x, Array({1, 3, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6}));
  b.bind(mask, Array({1, 3}, std::vector<double>{1, 1, 0}));
  for (auto* p : rnn.all_parameters()) b.bind(p->variable, p->value);
  const auto out = g::forward(g::ComputationGraph({h}), b)[0];
  // masked step carries the previous state forward
  EXPECT_EQ(out[4], out[2]);
  EXPECT_EQ(out[5], out[3]);
}

}  // namespace
