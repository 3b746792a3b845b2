#include <benchmark/benchmark.h>

#include "coadapt/data.hpp"
#include "coadapt/training.hpp"

using namespace coadapt;

namespace {

// Ten collaborative iterations on two 64x64 sources with every branch on.
void BM_CollaborativeIterations(benchmark::State& state) {
  const auto b = data::generate_benchmark(3, 8, 1, 1);
  std::vector<data::Dataset> sources;
  for (const auto& s : b.sources) sources.push_back(data::Dataset::from_synth(s, 5));
  const auto target = data::Dataset::from_synth(b.target_train, 5).without_labels();
  train::TrainConfig cfg;
  cfg.max_its = cfg.early_stop_it = 10;
  cfg.branches.use_translation = state.range(0) != 0;
  cfg.branches.use_src_col = state.range(1) != 0;
  cfg.branches.use_tgt_col = state.range(2) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(train::train_collaborative(sources, &target, cfg));
}
BENCHMARK(BM_CollaborativeIterations)
    ->Args({0, 0, 0})
    ->Args({1, 0, 0})
    ->Args({0, 1, 0})
    ->Args({0, 0, 1})
    ->Args({1, 1, 1})
    ->Unit(benchmark::kMillisecond);

}  // namespace
