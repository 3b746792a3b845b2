#include <benchmark/benchmark.h>

#include "coadapt/colorspace.hpp"
#include "coadapt/rng.hpp"

using namespace coadapt;

namespace {

Image noise_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, ColorSpace::kSrgbUnit);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

void BM_RgbToLab(benchmark::State& state) {
  const Image img = noise_image(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(color::rgb_to_lab(img));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(img.pixel_count()));
}
BENCHMARK(BM_RgbToLab)->Arg(64)->Arg(256);

void BM_Translate(benchmark::State& state) {
  const Image src = noise_image(static_cast<int>(state.range(0)), 1);
  const Image tgt = noise_image(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(color::translate(src, tgt));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(src.pixel_count()));
}
BENCHMARK(BM_Translate)->Arg(64)->Arg(256);

void BM_TranslateCachedStats(benchmark::State& state) {
  const Image src = noise_image(64, 1);
  const auto stats = color::channel_stats(color::rgb_to_lab(noise_image(64, 2)));
  for (auto _ : state) benchmark::DoNotOptimize(color::translate(src, stats));
}
BENCHMARK(BM_TranslateCachedStats);

}  // namespace
