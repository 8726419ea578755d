#include <benchmark/benchmark.h>

#include "binadapt/graph.hpp"
#include "binadapt/layers.hpp"
#include "binadapt/model.hpp"
#include "binadapt/optimizer.hpp"
#include "binadapt/similarity.hpp"

using namespace binadapt;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// args: channels, spatial size
void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const ConvSpec spec = ConvSpec::halving(c, c, 3, 2);
  const Tensor x = random_tensor({c, n, n}, rng);
  const Tensor w = random_tensor(spec.conv_weight_shape(), rng);
  const Tensor b = random_tensor({c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, spec, w, b));
}
BENCHMARK(BM_ConvForward)->Args({8, 32})->Args({8, 64})->Args({64, 32});

void BM_ConvBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  Graph g;
  const ConvSpec spec = ConvSpec::halving(c, c, 3, 2);
  const NodeId x = g.parameter("x", random_tensor({c, n, n}, rng));
  const NodeId y = g.conv2d("conv", x, g.parameter("w", random_tensor(spec.conv_weight_shape(), rng)),
                            g.parameter("b", random_tensor({c}, rng)), spec);
  g.set_output("loss", g.sum("total", y));
  g.forward({});
  for (auto _ : state) benchmark::DoNotOptimize(g.backward("loss"));
}
BENCHMARK(BM_ConvBackward)->Args({8, 32})->Args({8, 64})->Args({64, 32});

// One forward + backward + Adam update of the desk-scale model on one patch.
void BM_TrainStep(benchmark::State& state) {
  Rng rng(3);
  const SaeConfig cfg = SaeConfig::desk_scale();
  Model m = build_sae(cfg, rng);
  Tensor image({cfg.channels, cfg.patch_h, cfg.patch_w}), truth({1, cfg.patch_h, cfg.patch_w});
  for (double& v : image.values()) v = rng.uniform();
  for (double& v : truth.values()) v = static_cast<double>(rng.index(2));
  const Bindings bindings{{io::kImage, image}, {io::kTruth, truth}};
  Optimizer opt{OptimizerConfig{}};
  ForwardOptions fo;
  fo.mode = Mode::kTraining;
  fo.outputs = {io::kLoss};
  for (auto _ : state) {
    m.graph().forward(bindings, fo);
    opt.step(m.graph().parameters(), m.graph().backward(io::kLoss));
    ++fo.seed;
  }
}
BENCHMARK(BM_TrainStep);

void BM_HistogramAndPearson(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  ProbabilityMap a, b;
  for (auto* m : {&a, &b}) {
    m->width = m->height = n;
    m->values.resize(n * n);
    for (double& v : m->values) v = rng.uniform();
  }
  for (auto _ : state) {
    DomainHistogram hs(kDefaultHistogramPrecision), ht(kDefaultHistogramPrecision);
    accumulate_histogram(a, kDefaultHistogramPrecision, hs);
    accumulate_histogram(b, kDefaultHistogramPrecision, ht);
    benchmark::DoNotOptimize(pearson(normalize_histogram(hs), normalize_histogram(ht)));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n));
}
BENCHMARK(BM_HistogramAndPearson)->Arg(128)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
