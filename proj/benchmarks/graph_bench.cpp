#include <benchmark/benchmark.h>

#include <memory>

#include "bf/bricks.hpp"
#include "bf/graph.hpp"

namespace {

namespace br = bf::bricks;
namespace g = bf::graph;

struct MlpFixture {
  std::shared_ptr<br::Mlp> mlp;
  g::Variable x, y, cost;
  g::Bindings bindings;

  explicit MlpFixture(std::size_t batch) {
    mlp = std::make_shared<br::Mlp>("mlp", std::vector<std::size_t>{64, 128, 10},
                                    std::vector<br::ActivationKind>{br::ActivationKind::Tanh,
                                                                    br::ActivationKind::Softmax});
    mlp->allocate();
    bf::Rng rng(3);
    br::initialize(*mlp, br::Initializer::gaussian(0.1), rng);
    x = g::input("x", {g::kBatch, 64});
    y = g::input("y", {g::kBatch, 10});
    cost = g::mean(g::cross_entropy(mlp->apply(x), y));
    bf::Array xv({batch, 64}), yv({batch, 10});
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = rng.uniform() - 0.5;
    for (std::size_t i = 0; i < batch; ++i) yv[i * 10 + i % 10] = 1.0;
    bindings.bind(x, xv);
    bindings.bind(y, yv);
    for (auto* p : mlp->all_parameters()) bindings.bind(p->variable, p->value);
  }

  std::vector<g::Variable> wrt() const {
    std::vector<g::Variable> out;
    for (auto* p : mlp->all_parameters()) out.push_back(p->variable);
    return out;
  }
};

}  // namespace

static void BM_MlpForward(benchmark::State& state) {
  MlpFixture f(static_cast<std::size_t>(state.range(0)));
  g::ComputationGraph cg({f.cost});
  for (auto _ : state) benchmark::DoNotOptimize(g::forward(cg, f.bindings));
}
BENCHMARK(BM_MlpForward)->Arg(1)->Arg(32)->Arg(256);

static void BM_MlpForwardBackward(benchmark::State& state) {
  MlpFixture f(static_cast<std::size_t>(state.range(0)));
  auto outputs = g::grad(f.cost, f.wrt());
  outputs.insert(outputs.begin(), f.cost);
  g::ComputationGraph cg(outputs);
  for (auto _ : state) benchmark::DoNotOptimize(g::forward(cg, f.bindings));
}
BENCHMARK(BM_MlpForwardBackward)->Arg(1)->Arg(32)->Arg(256);

static void BM_BuildGradientGraph(benchmark::State& state) {
  MlpFixture f(1);
  const auto wrt = f.wrt();
  for (auto _ : state) benchmark::DoNotOptimize(g::grad(f.cost, wrt));
}
BENCHMARK(BM_BuildGradientGraph);

BENCHMARK_MAIN();
