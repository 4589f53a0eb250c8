#include "condnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

#include "condnet/linalg.hpp"
#include "condnet/rng.hpp"

namespace condnet {
namespace {

volatile double g_sink = 0.0;

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.flat()) v = rng.uniform(-1.0, 1.0);
  return m;
}

BlockMask random_mask(std::size_t examples, std::size_t n_blocks, std::size_t block_size,
                      double rate, Rng& rng) {
  BlockMask m(examples, n_blocks, block_size);
  for (std::size_t i = 0; i < examples; ++i)
    for (std::size_t j = 0; j < n_blocks; ++j) m.set(i, j, rng.uniform() < rate);
  return m;
}

}  // namespace

double time_median_ns(const std::function<void()>& fn, std::size_t trials) {
  if (trials == 0) throw std::invalid_argument("time_median_ns: trials must be >= 1");
  using clock = std::chrono::steady_clock;
  fn();  // warm-up
  std::vector<double> ns;
  ns.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    ns.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(ns.begin(), ns.end());
  const std::size_t mid = ns.size() / 2;
  return ns.size() % 2 ? ns[mid] : 0.5 * (ns[mid - 1] + ns[mid]);
}

BenchRow bench_masked_matmul(const MatmulDims& dims, std::size_t block_size, double sparsity,
                             const BenchOptions& opt) {
  if (!(sparsity > 0.0 && sparsity <= 1.0))
    throw std::invalid_argument("bench_masked_matmul: sparsity must be in (0, 1]");
  if (block_size == 0 || dims.inner % block_size || dims.cols % block_size)
    throw std::invalid_argument("bench_masked_matmul: block_size " + std::to_string(block_size) +
                                " must divide inner and cols");

  Rng rng(opt.seed, dims.rows * 31 + dims.inner * 17 + dims.cols + block_size);
  const Matrix h = random_matrix(dims.rows, dims.inner, rng);
  const Matrix w = random_matrix(dims.inner, dims.cols, rng);
  const BlockMask m_h = random_mask(dims.rows, dims.inner / block_size, block_size, sparsity, rng);
  const BlockMask m_o = random_mask(dims.rows, dims.cols / block_size, block_size, sparsity, rng);
  // The dense path sees the same masked input the sparse kernel skips over.
  Matrix h_masked = h;
  const Matrix mh_units = expand_mask(m_h);
  for (std::size_t i = 0; i < h_masked.size(); ++i) h_masked.flat()[i] *= mh_units.flat()[i];

  BenchRow row;
  row.dims = dims;
  row.block_size = block_size;
  row.sparsity = sparsity;
  row.dense_ns = time_median_ns([&] { g_sink = g_sink + matmul(h_masked, w).flat()[0]; },
                                opt.trials);
  row.sparse_ns = time_median_ns(
      [&] { g_sink = g_sink + masked_matmul(h_masked, w, m_h, m_o).flat()[0]; }, opt.trials);
  row.speedup = row.dense_ns / row.sparse_ns;
  return row;
}

std::vector<BenchRow> bench_sweep(const std::vector<MatmulDims>& dims,
                                  const std::vector<std::size_t>& block_sizes,
                                  const std::vector<double>& sparsities, const BenchOptions& opt) {
  std::vector<BenchRow> out;
  for (const auto& d : dims)
    for (const auto bs : block_sizes)
      for (const double s : sparsities) out.push_back(bench_masked_matmul(d, bs, s, opt));
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "rows,inner,cols,block_size,sparsity,dense_ns,sparse_ns,speedup\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.6g,%.0f,%.0f,%.4f\n", r.dims.rows,
                  r.dims.inner, r.dims.cols, r.block_size, r.sparsity, r.dense_ns, r.sparse_ns,
                  r.speedup);
    os << buf;
  }
}

}  // namespace condnet
