#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace condnet {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  /// Builds a matrix from caller-supplied data. Rejects size mismatches and
  /// non-finite entries.
  static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool all_finite() const noexcept;

  /// Rows selected by index, in the given order.
  Matrix gather_rows(std::span<const std::size_t> idx) const;
  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_str(const Matrix& m);

/// Per-example binary block activation pattern (u in the policy, M_H / M_O in
/// the kernel). Bit (i, j) switches units [j*block_size, (j+1)*block_size) of
/// example i.
class BlockMask {
public:
  BlockMask() = default;
  BlockMask(std::size_t examples, std::size_t n_blocks, std::size_t block_size,
            std::uint8_t fill = 0);

  static BlockMask ones(std::size_t examples, std::size_t n_blocks, std::size_t block_size);
  static BlockMask from_bits(const std::vector<std::vector<int>>& bits, std::size_t block_size);

  std::size_t examples() const noexcept { return examples_; }
  std::size_t n_blocks() const noexcept { return n_blocks_; }
  std::size_t block_size() const noexcept { return block_size_; }
  std::size_t unit_width() const noexcept { return n_blocks_ * block_size_; }

  std::uint8_t operator()(std::size_t i, std::size_t j) const noexcept {
    return bits_[i * n_blocks_ + j];
  }
  void set(std::size_t i, std::size_t j, bool on) noexcept {
    bits_[i * n_blocks_ + j] = on ? 1 : 0;
  }
  std::span<const std::uint8_t> row(std::size_t i) const noexcept {
    return {bits_.data() + i * n_blocks_, n_blocks_};
  }

  std::size_t count_active() const noexcept;
  BlockMask gather_rows(std::span<const std::size_t> idx) const;

  bool operator==(const BlockMask&) const = default;

private:
  std::size_t examples_ = 0;
  std::size_t n_blocks_ = 0;
  std::size_t block_size_ = 1;
  std::vector<std::uint8_t> bits_;
};

/// Unit-level 0/1 matrix: each block bit repeated block_size times.
Matrix expand_mask(const BlockMask& m);

}  // namespace condnet
