#include <benchmark/benchmark.h>

#include "coadapt/losses.hpp"
#include "coadapt/model.hpp"
#include "coadapt/rng.hpp"

using namespace coadapt;
using autograd::Tensor;

namespace {

Tensor random_tensor(autograd::Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::vector<double> v(autograd::shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1, 1);
  return Tensor(std::move(shape), std::move(v), grad);
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({f, 64, 64}, 1);
  const Tensor w = random_tensor({f, f, 3, 3}, 2);
  const Tensor b = random_tensor({f}, 3);
  autograd::NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(autograd::conv2d(x, w, b, 1));
}
BENCHMARK(BM_Conv3x3Forward)->Arg(3)->Arg(16);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({f, 64, 64}, 1, true);
  Tensor w = random_tensor({f, f, 3, 3}, 2, true);
  Tensor b = random_tensor({f}, 3, true);
  for (auto _ : state) {
    autograd::backward(autograd::sum(autograd::conv2d(x, w, b, 1)));
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Arg(16);

void BM_ModelStep(benchmark::State& state) {
  auto model = nn::SegNetMicro::init({16, 5}, 1);
  const Tensor x = random_tensor({3, 64, 64}, 4);
  LabelMap labels(64, 64, 2);
  for (auto _ : state) {
    autograd::backward(losses::cross_entropy(model.forward(x), labels));
    model.zero_grad();
  }
}
BENCHMARK(BM_ModelStep)->Unit(benchmark::kMillisecond);

}  // namespace
