#include <benchmark/benchmark.h>

#include "condnet/linalg.hpp"
#include "condnet/network.hpp"
#include "condnet/rng.hpp"

using namespace condnet;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

BlockMask random_mask(std::size_t m, std::size_t blocks, std::size_t bs, double p, Rng& rng) {
  BlockMask mask(m, blocks, bs);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < blocks; ++j) mask.set(i, j, rng.uniform() < p);
  return mask;
}

// Args: n (square size), block size, active fraction in percent.
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.counters["flops"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_MaskedMatmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto bs = static_cast<std::size_t>(state.range(1));
  const double p = static_cast<double>(state.range(2)) / 100.0;
  Rng rng(1);
  const Matrix h = random_matrix(n, n, rng), w = random_matrix(n, n, rng);
  const BlockMask mh = random_mask(n, n / bs, bs, p, rng);
  const BlockMask mo = random_mask(n, n / bs, bs, p, rng);
  for (auto _ : state) benchmark::DoNotOptimize(masked_matmul(h, w, mh, mo));
}

void BM_MaskedAccumulateAtB(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto bs = static_cast<std::size_t>(state.range(1));
  const double p = static_cast<double>(state.range(2)) / 100.0;
  Rng rng(2);
  const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  const BlockMask ma = random_mask(n, n / bs, bs, p, rng);
  const BlockMask mb = random_mask(n, n / bs, bs, p, rng);
  Matrix out(n, n);
  for (auto _ : state) {
    masked_accumulate_at_b(a, ma, b, mb, out);
    benchmark::ClobberMemory();
  }
}

// Forward pass of a 784-[16x16]-10 network on a minibatch.
void BM_ForwardMnistShape(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const bool dense = state.range(1) != 0;
  Architecture arch{784, {{16, 16}}, 10, Activation::tanh};
  Rng rng(3);
  const NetworkParams net = init_glorot(arch, rng);
  const auto pols = init_policies(arch, rng);
  Matrix x(m, 784);
  for (double& v : x.flat()) v = rng.uniform();
  ForwardOptions opt;
  opt.dense_compute = dense;
  for (auto _ : state) {
    Rng r(4);
    benchmark::DoNotOptimize(forward(net, pols, x, r, opt));
  }
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaskedMatmul)
    ->ArgsProduct({{256, 1024}, {16, 64}, {6, 12, 25, 50, 100}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaskedAccumulateAtB)
    ->ArgsProduct({{256}, {16, 64}, {12, 50, 100}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardMnistShape)->ArgsProduct({{32, 1000}, {0, 1}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
