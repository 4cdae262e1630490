#include <gtest/gtest.h>

#include <cmath>

#include "bf/error.hpp"
#include "bf/graph.hpp"

namespace {

namespace g = bf::graph;
using bf::Array;

TEST(Graph, RoleNamesRoundTrip) {
  for (auto r : {g::Role::Input, g::Role::Output, g::Role::Parameter, g::Role::Weight, g::Role::Bias,
                 g::Role::Auxiliary, g::Role::Cost}) {
    EXPECT_EQ(g::role_from_name(g::role_name(r)), r);
  }
  EXPECT_EQ(g::role_name(g::Role::Weight), "WEIGHT");
}

TEST(Graph, ParameterImpliesParameterRole) {
  auto w = g::parameter("W", {2, 3}, g::RoleSet{g::Role::Weight}, "/mlp");
  EXPECT_TRUE(w.has_role(g::Role::Weight));
  EXPECT_TRUE(w.has_role(g::Role::Parameter));
  EXPECT_EQ(w.path(), "/mlp.W");
  EXPECT_THROW(g::parameter("W", {g::kBatch, 3}, {}, ""), bf::ContractError);
}

TEST(Graph, ShapeInferenceWithSymbolicBatch) {
  auto x = g::input("x", {g::kBatch, 3});
  auto w = g::parameter("W", {3, 4}, g::RoleSet{g::Role::Weight}, "");
  auto b = g::parameter("b", {4}, g::RoleSet{g::Role::Bias}, "");
  auto y = g::add(g::matmul(x, w), b);
  EXPECT_EQ(y.dims(), (g::Dims{g::kBatch, 4}));
  EXPECT_EQ(g::dims_to_string(y.dims()), "[batch, 4]");
  EXPECT_EQ(g::sum(y).ndim(), 0u);
  EXPECT_THROW(g::matmul(x, g::parameter("V", {2, 2}, {}, "")), bf::ContractError);
  EXPECT_THROW(g::add(b, w), bf::ContractError);
  EXPECT_THROW(g::cross_entropy(y, g::input("t", {g::kBatch, 3})), bf::ContractError);
}

TEST(Graph, ForwardComputesKnownValues) {
  auto x = g::input("x", {g::kBatch, 2});
  auto w = g::parameter("W", {2, 2}, g::RoleSet{g::Role::Weight}, "");
  auto y = g::softmax(g::matmul(x, w));
  g::ComputationGraph cg({y, g::mean(x)});
  g::Bindings b;
  b.bind(x, Array({1, 2}, std::vector<double>{1, 2}));
  b.bind(w, Array({2, 2}, std::vector<double>{1, 0, 0, 1}));
  const auto out = g::forward(cg, b);
  const double e = std::exp(1.0);
  EXPECT_DOUBLE_EQ(out[0][0], 1.0 / (1.0 + e));
  EXPECT_DOUBLE_EQ(out[0][1], e / (1.0 + e));
  EXPECT_DOUBLE_EQ(out[1].item(), 1.5);
  EXPECT_GT(g::last_forward_evaluations(), 0u);
}

TEST(Graph, SoftmaxIsStableForLargeInputs) {
  auto x = g::input("x", {1, 3});
  g::Bindings b;
  b.bind(x, Array({1, 3}, std::vector<double>{1000, 1000, 1000}));
  const auto out = g::forward(g::ComputationGraph({g::softmax(x)}), b);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(out[0][i], 1.0 / 3.0);
}

TEST(Graph, CrossEntropyAndMseValues) {
  auto p = g::input("p", {g::kBatch, 2});
  auto t = g::input("t", {g::kBatch, 2});
  g::Bindings b;
  b.bind(p, Array({2, 2}, std::vector<double>{0.5, 0.5, 0.25, 0.75}));
  b.bind(t, Array({2, 2}, std::vector<double>{1, 0, 0, 1}));
  const auto out = g::forward(g::ComputationGraph({g::cross_entropy(p, t), g::mse(p, t)}), b);
  EXPECT_DOUBLE_EQ(out[0].item(), -(std::log(0.5) + std::log(0.75)) / 2);
  EXPECT_DOUBLE_EQ(out[1].item(), (0.25 + 0.25 + 0.0625 + 0.0625) / 4);
}

TEST(Graph, BindTimeChecks) {
  auto x = g::input("x", {g::kBatch, 2});
  auto y = g::input("y", {g::kBatch, 2});
  g::ComputationGraph cg({g::add(x, y)});
  g::Bindings b;
  b.bind(x, Array({3, 2}));
  EXPECT_THROW(g::forward(cg, b), bf::ContractError);  // y unbound
  b.bind(y, Array({4, 2}));
  EXPECT_THROW(g::forward(cg, b), bf::ContractError);  // batch extents differ
  b.bind(y, Array({3, 3}));
  EXPECT_THROW(g::forward(cg, b), bf::ContractError);  // feature extent differs
}

TEST(Graph, TopologicalOrderAndLookups) {
  auto x = g::input("x", {2});
  auto y = g::tanh(x);
  auto z = g::add(y, y);
  g::ComputationGraph cg({z});
  ASSERT_EQ(cg.variables().size(), 3u);
  EXPECT_EQ(cg.id_of(x), 0u);
  EXPECT_EQ(cg.id_of(z), 2u);
  EXPECT_EQ(cg.inputs().size(), 1u);
  EXPECT_TRUE(cg.find_input("x").has_value());
  EXPECT_THROW(cg.id_of(g::input("other", {2})), bf::LookupError);
}

TEST(Graph, SequenceOps) {
  auto seq = g::input("s", {g::kBatch, 3, 2});
  auto s1 = g::select_step(seq, 1);
  EXPECT_EQ(s1.dims(), (g::Dims{g::kBatch, 2}));
  EXPECT_THROW(g::select_step(seq, 3), bf::ContractError);
  auto stacked = g::stack_steps({s1, s1});
  EXPECT_EQ(stacked.dims(), (g::Dims{g::kBatch, 2, 2}));

  auto mask = g::input("m", {g::kBatch});
  auto u = g::input("u", {g::kBatch, 2});
  auto p = g::input("p", {g::kBatch, 2});
  g::Bindings b;
  b.bind(mask, Array({2}, std::vector<double>{1, 0}));
  b.bind(u, Array({2, 2}, std::vector<double>{1, 2, 3, 4}));
  b.bind(p, Array({2, 2}, std::vector<double>{5, 6, 7, 8}));
  const auto out = g::forward(g::ComputationGraph({g::mask_blend(mask, u, p)}), b);
  EXPECT_EQ(out[0], Array({2, 2}, std::vector<double>{1, 2, 7, 8}));
}

TEST(Graph, ApplyOpRefusesLeaves) {
  EXPECT_THROW(g::apply_op(g::Op::Input, {}), bf::ContractError);
}

}  // namespace
