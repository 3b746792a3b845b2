#include <benchmark/benchmark.h>

#include "coadapt/pseudolabel.hpp"
#include "coadapt/rng.hpp"

using namespace coadapt;
using autograd::Tensor;

namespace {

std::vector<Tensor> logit_maps(int n, int size) {
  Rng rng(7);
  std::vector<Tensor> out;
  const auto s = static_cast<std::size_t>(size);
  for (int k = 0; k < n; ++k) {
    std::vector<double> v(5 * s * s);
    for (double& x : v) x = rng.normal(0, 2);
    out.emplace_back(autograd::Shape{5, s, s}, std::move(v));
  }
  return out;
}

void BM_EnsembleProbability(benchmark::State& state) {
  const auto maps = logit_maps(static_cast<int>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(pseudo::ensemble_probability(maps));
}
BENCHMARK(BM_EnsembleProbability)->Arg(1)->Arg(2)->Arg(4);

void BM_GeneratePseudoLabels(benchmark::State& state) {
  const auto probs = pseudo::ensemble_probability(logit_maps(2, static_cast<int>(state.range(0))));
  const pseudo::PseudoLabelConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(pseudo::generate_pseudo_labels(probs, cfg));
}
BENCHMARK(BM_GeneratePseudoLabels)->Arg(64)->Arg(256);

}  // namespace
