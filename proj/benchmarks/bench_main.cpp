#include <benchmark/benchmark.h>

#include "dancegen/rng.hpp"
#include "dancegen/tensor.hpp"

using namespace dancegen;

static Tensor random_leaf(Shape s, Rng& rng, bool rg = false) {
  Tensor t = Tensor::zeros(std::move(s), rg);
  for (double& x : t.mutable_data()) x = rng.normal();
  return t;
}

static void BM_conv2d_forward(benchmark::State& state) {
  Rng rng(1);
  Tensor x = random_leaf({16, 64, 25}, rng);
  Tensor w = random_leaf({16, 16, 9}, rng);
  Tensor b = random_leaf({16}, rng);
  for (auto _ : state) {
    Tensor y = conv2d(x, w, b, 1, 4);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_conv2d_forward);

static void BM_conv2d_train_step(benchmark::State& state) {
  Rng rng(2);
  for (auto _ : state) {
    Tensor x = random_leaf({8, 64, 25}, rng);
    Tensor w = random_leaf({8, 8, 9}, rng, true);
    Tensor b = random_leaf({8}, rng, true);
    Tensor loss = mean(mul(conv2d(x, w, b, 1, 4), 1.0));
    backward(loss);
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_conv2d_train_step);

static void BM_tensordot(benchmark::State& state) {
  Rng rng(3);
  Tensor f = random_leaf({32, 64, 25}, rng);
  Tensor a = random_leaf({25, 25}, rng);
  for (auto _ : state) {
    Tensor y = tensordot(f, a, {{2, 1}});
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_tensordot);

BENCHMARK_MAIN();
