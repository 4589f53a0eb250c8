#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace condnet {

struct MatmulDims {
  std::size_t rows = 0;   // examples in H
  std::size_t inner = 0;  // H cols == W rows
  std::size_t cols = 0;   // W cols
};

struct BenchRow {
  MatmulDims dims;
  std::size_t block_size = 1;
  double sparsity = 1.0;  // fraction of active blocks
  double dense_ns = 0.0;
  double sparse_ns = 0.0;
  double speedup = 0.0;
};

struct BenchOptions {
  std::size_t trials = 5;  // timed trials; one extra warm-up run is discarded
  std::uint64_t seed = 0;
};

/// Median wall-clock nanoseconds of `fn` over `trials` runs after one warm-up
/// run, on the steady clock.
double time_median_ns(const std::function<void()>& fn, std::size_t trials);

/// Dense matmul vs masked_matmul on random H, W with both masks drawn
/// i.i.d. Bernoulli(sparsity) per block. Runs on the calling thread only.
BenchRow bench_masked_matmul(const MatmulDims& dims, std::size_t block_size, double sparsity,
                             const BenchOptions& opt = {});

std::vector<BenchRow> bench_sweep(const std::vector<MatmulDims>& dims,
                                  const std::vector<std::size_t>& block_sizes,
                                  const std::vector<double>& sparsities,
                                  const BenchOptions& opt = {});

/// CSV with header `rows,inner,cols,block_size,sparsity,dense_ns,sparse_ns,speedup`.
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace condnet
