#include "condnet/linalg.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace condnet {
namespace {

constexpr std::size_t kColTile = 256;
constexpr std::size_t kDepthTile = 128;
constexpr std::size_t kRowTile = 64;

[[noreturn]] void fail(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

std::string shapes(const Matrix& a, const Matrix& b) {
  return shape_str(a) + " vs " + shape_str(b);
}

struct Run {
  std::size_t begin, end;
};

// Active blocks of row i merged into contiguous unit ranges.
void active_runs(const BlockMask& m, std::size_t i, std::vector<Run>& out) {
  out.clear();
  const auto r = m.row(i);
  const std::size_t bs = m.block_size();
  for (std::size_t j = 0; j < r.size(); ++j) {
    if (!r[j]) continue;
    if (!out.empty() && out.back().end == j * bs)
      out.back().end += bs;
    else
      out.push_back({j * bs, (j + 1) * bs});
  }
}

void check_mask_rows(const BlockMask& m, std::size_t rows, const char* op, const char* which) {
  if (m.examples() != rows) fail(op,
          std::string(which) + " has " + std::to_string(m.examples()) + " examples, expected " +
              std::to_string(rows));
}

void check_mask_width(const BlockMask& m, std::size_t width, const char* op, const char* which) {
  if (m.unit_width() != width) fail(op,
          std::string(which) + " covers " + std::to_string(m.n_blocks()) + " blocks of size " +
              std::to_string(m.block_size()) + " (" + std::to_string(m.unit_width()) +
              " units), expected " + std::to_string(width));
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail("matmul", "inner dimensions differ: " + shapes(a, b));
  const std::size_t m = a.rows(), depth = a.cols(), n = b.cols();
  Matrix c(m, n);
  // Tiled over (col, depth); for every entry the depth tiles are visited in
  // ascending order, so the summation order is plain k = 0..depth-1.
  for (std::size_t j0 = 0; j0 < n; j0 += kColTile) {
    const std::size_t j1 = std::min(n, j0 + kColTile);
    for (std::size_t k0 = 0; k0 < depth; k0 += kDepthTile) {
      const std::size_t k1 = std::min(depth, k0 + kDepthTile);
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        const double* arow = a.data() + i * depth;
        for (std::size_t k = k0; k < k1; ++k) {
          const double aik = arow[k];
          const double* brow = b.data() + k * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += aik * brow[j];
        }
      }
    }
  }
  return c;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) fail("matmul_bt", "inner dimensions differ: " + shapes(a, b));
  const std::size_t m = a.rows(), depth = a.cols(), n = b.rows();
  Matrix c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * depth;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * depth;
      double acc = 0.0;
      for (std::size_t k = 0; k < depth; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix masked_matmul(const Matrix& h, const Matrix& w, const BlockMask& m_h, const BlockMask& m_o) {
  constexpr const char* op = "masked_matmul";
  if (h.cols() != w.rows()) fail(op, "inner dimensions differ: " + shapes(h, w));
  check_mask_rows(m_h, h.rows(), op, "m_h");
  check_mask_rows(m_o, h.rows(), op, "m_o");
  check_mask_width(m_h, h.cols(), op, "m_h");
  check_mask_width(m_o, w.cols(), op, "m_o");

  const std::size_t m = h.rows(), depth = h.cols(), n = w.cols();
  const std::size_t in_bs = m_h.block_size();
  Matrix c(m, n);
  std::vector<std::vector<Run>> out_runs(kRowTile);
  std::vector<std::size_t> rows;
  rows.reserve(kRowTile);

  // Row tiles keep a panel of C hot while W streams through once per tile;
  // inside a tile depth runs outermost so each W row is reused by every row
  // that needs it. Each entry still accumulates k in ascending order.
  for (std::size_t i0 = 0; i0 < m; i0 += kRowTile) {
    const std::size_t i1 = std::min(m, i0 + kRowTile);
    for (std::size_t i = i0; i < i1; ++i) active_runs(m_o, i, out_runs[i - i0]);
    for (std::size_t kb = 0; kb < m_h.n_blocks(); ++kb) {
      rows.clear();
      for (std::size_t i = i0; i < i1; ++i)
        if (m_h(i, kb) && !out_runs[i - i0].empty()) rows.push_back(i);
      if (rows.empty()) continue;
      for (std::size_t k = kb * in_bs, k1 = k + in_bs; k < k1; ++k) {
        const double* wrow = w.data() + k * n;
        for (const std::size_t i : rows) {
          const double hik = h.data()[i * depth + k];
          double* crow = c.data() + i * n;
          for (const Run& r : out_runs[i - i0])
            for (std::size_t j = r.begin; j < r.end; ++j) crow[j] += hik * wrow[j];
        }
      }
    }
  }
  return c;
}

void accumulate_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows()) fail("accumulate_at_b", "row counts differ: " + shapes(a, b));
  if (!(out.rows() == a.cols() && out.cols() == b.cols())) fail("accumulate_at_b",
          "output is " + shape_str(out) + ", expected " + std::to_string(a.cols()) + "x" +
              std::to_string(b.cols()));
  const std::size_t m = a.rows(), n_a = a.cols(), n_b = b.cols();
  for (std::size_t k = 0; k < n_a; ++k) {
    double* orow = out.data() + k * n_b;
    for (std::size_t i = 0; i < m; ++i) {
      const double aik = a.data()[i * n_a + k];
      const double* brow = b.data() + i * n_b;
      for (std::size_t j = 0; j < n_b; ++j) orow[j] += aik * brow[j];
    }
  }
}

void masked_accumulate_at_b(const Matrix& a, const BlockMask& m_a, const Matrix& b,
                            const BlockMask& m_b, Matrix& out) {
  constexpr const char* op = "masked_accumulate_at_b";
  if (a.rows() != b.rows()) fail(op, "row counts differ: " + shapes(a, b));
  if (!(out.rows() == a.cols() && out.cols() == b.cols())) fail(op,
          "output is " + shape_str(out) + ", expected " + std::to_string(a.cols()) + "x" +
              std::to_string(b.cols()));
  check_mask_rows(m_a, a.rows(), op, "m_a");
  check_mask_rows(m_b, b.rows(), op, "m_b");
  check_mask_width(m_a, a.cols(), op, "m_a");
  check_mask_width(m_b, b.cols(), op, "m_b");

  const std::size_t m = a.rows(), n_a = a.cols(), n_b = b.cols();
  const std::size_t a_bs = m_a.block_size();
  std::vector<std::vector<Run>> b_runs(m);
  for (std::size_t i = 0; i < m; ++i) active_runs(m_b, i, b_runs[i]);
  std::vector<std::size_t> rows;
  rows.reserve(m);
  // Output row k stays hot while examples stream past in ascending order.
  for (std::size_t kb = 0; kb < m_a.n_blocks(); ++kb) {
    rows.clear();
    for (std::size_t i = 0; i < m; ++i)
      if (m_a(i, kb) && !b_runs[i].empty()) rows.push_back(i);
    if (rows.empty()) continue;
    for (std::size_t k = kb * a_bs, k1 = k + a_bs; k < k1; ++k) {
      double* orow = out.data() + k * n_b;
      for (const std::size_t i : rows) {
        const double aik = a.data()[i * n_a + k];
        const double* brow = b.data() + i * n_b;
        for (const Run& r : b_runs[i])
          for (std::size_t j = r.begin; j < r.end; ++j) orow[j] += aik * brow[j];
      }
    }
  }
}

Matrix masked_matmul_bt(const Matrix& d, const Matrix& w, const BlockMask& m_d,
                        const BlockMask& m_out) {
  constexpr const char* op = "masked_matmul_bt";
  if (d.cols() != w.cols()) fail(op, "inner dimensions differ: " + shapes(d, w));
  check_mask_rows(m_d, d.rows(), op, "m_d");
  check_mask_rows(m_out, d.rows(), op, "m_out");
  check_mask_width(m_d, d.cols(), op, "m_d");
  check_mask_width(m_out, w.rows(), op, "m_out");

  const std::size_t m = d.rows(), depth = d.cols(), n = w.rows();
  const std::size_t o_bs = m_out.block_size();
  Matrix c(m, n);
  std::vector<std::vector<Run>> d_runs(m);
  for (std::size_t i = 0; i < m; ++i) active_runs(m_d, i, d_runs[i]);
  std::vector<std::size_t> rows;
  rows.reserve(m);
  for (std::size_t ob = 0; ob < m_out.n_blocks(); ++ob) {
    rows.clear();
    for (std::size_t i = 0; i < m; ++i)
      if (m_out(i, ob) && !d_runs[i].empty()) rows.push_back(i);
    if (rows.empty()) continue;
    for (std::size_t k = ob * o_bs, k1 = k + o_bs; k < k1; ++k) {
      const double* wrow = w.data() + k * depth;
      for (const std::size_t i : rows) {
        const double* drow = d.data() + i * depth;
        double acc = 0.0;
        for (const Run& r : d_runs[i])
          for (std::size_t j = r.begin; j < r.end; ++j) acc += drow[j] * wrow[j];
        c(i, k) = acc;
      }
    }
  }
  return c;
}

void add_row_vector(Matrix& m, std::span<const double> v) {
  if (v.size() != m.cols()) fail("add_row_vector",
          "vector length " + std::to_string(v.size()) + " vs " + shape_str(m));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += v[j];
  }
}

void accumulate_col_sums(const Matrix& m, std::span<double> out) {
  if (out.size() != m.cols()) fail("accumulate_col_sums",
          "output length " + std::to_string(out.size()) + " vs " + shape_str(m));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  if (!(x.rows() == y.rows() && x.cols() == y.cols())) fail("axpy", shapes(x, y));
  axpy(alpha, x.flat(), y.flat());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) fail("axpy", "length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double squared_norm(const Matrix& m) { return squared_norm(m.flat()); }

double squared_norm(std::span<const double> v) {
  // Four interleaved partial sums, combined in a fixed order.
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= v.size(); i += 4)
    for (std::size_t k = 0; k < 4; ++k) s[k] += v[i + k] * v[i + k];
  for (; i < v.size(); ++i) s[i % 4] += v[i] * v[i];
  return (s[0] + s[1]) + (s[2] + s[3]);
}

}  // namespace condnet
