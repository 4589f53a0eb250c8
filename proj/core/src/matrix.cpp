#include "condnet/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace condnet {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
  if (data.size() != rows * cols) {
    throw std::invalid_argument("Matrix::from_data: expected " + std::to_string(rows * cols) +
                                " entries for " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw std::invalid_argument("Matrix::from_data: non-finite entry at flat index " +
                                  std::to_string(i));
    }
  }
  Matrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.data_ = std::move(data);
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return from_data(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::gather_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols_);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows_) throw std::out_of_range("Matrix::gather_rows: row index out of range");
    std::copy_n(data_.data() + idx[i] * cols_, cols_, out.data_.data() + i * cols_);
  }
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

BlockMask::BlockMask(std::size_t examples, std::size_t n_blocks, std::size_t block_size,
                     std::uint8_t fill)
    : examples_(examples), n_blocks_(n_blocks), block_size_(block_size),
      bits_(examples * n_blocks, fill ? 1 : 0) {
  if (block_size == 0) throw std::invalid_argument("BlockMask: block_size must be >= 1");
}

BlockMask BlockMask::ones(std::size_t examples, std::size_t n_blocks, std::size_t block_size) {
  return BlockMask(examples, n_blocks, block_size, 1);
}

BlockMask BlockMask::from_bits(const std::vector<std::vector<int>>& bits, std::size_t block_size) {
  const std::size_t e = bits.size();
  const std::size_t n = e == 0 ? 0 : bits.front().size();
  BlockMask m(e, n, block_size);
  for (std::size_t i = 0; i < e; ++i) {
    if (bits[i].size() != n) throw std::invalid_argument("BlockMask::from_bits: ragged rows");
    for (std::size_t j = 0; j < n; ++j) {
      if (bits[i][j] != 0 && bits[i][j] != 1)
        throw std::invalid_argument("BlockMask::from_bits: bits must be 0 or 1");
      m.set(i, j, bits[i][j] == 1);
    }
  }
  return m;
}

std::size_t BlockMask::count_active() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BlockMask BlockMask::gather_rows(std::span<const std::size_t> idx) const {
  BlockMask out(idx.size(), n_blocks_, block_size_);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= examples_)
      throw std::out_of_range("BlockMask::gather_rows: row index out of range");
    std::copy_n(bits_.data() + idx[i] * n_blocks_, n_blocks_, out.bits_.data() + i * n_blocks_);
  }
  return out;
}

Matrix expand_mask(const BlockMask& m) {
  Matrix out(m.examples(), m.unit_width());
  const std::size_t bs = m.block_size();
  for (std::size_t i = 0; i < m.examples(); ++i)
    for (std::size_t j = 0; j < m.n_blocks(); ++j)
      if (m(i, j))
        for (std::size_t u = 0; u < bs; ++u) out(i, j * bs + u) = 1.0;
  return out;
}

}  // namespace condnet
