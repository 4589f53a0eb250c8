#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "condnet/matrix.hpp"

namespace condnet {

// Every product below sums over its inner index in ascending order, starting
// from 0.0, so the dense and block-sparse paths agree bit-for-bit wherever no
// block is skipped.

/// a · b.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a · bᵀ.
Matrix matmul_bt(const Matrix& a, const Matrix& b);

/// ((h ⊗ expand(m_h)) · w) ⊗ expand(m_o), computed per example over the
/// active input and output blocks only.
Matrix masked_matmul(const Matrix& h, const Matrix& w, const BlockMask& m_h, const BlockMask& m_o);

/// out += aᵀ · b, summing over examples (rows) in ascending order.
void accumulate_at_b(const Matrix& a, const Matrix& b, Matrix& out);

/// out += (a ⊗ expand(m_a))ᵀ · (b ⊗ expand(m_b)); zero blocks of either side
/// are skipped per example.
void masked_accumulate_at_b(const Matrix& a, const BlockMask& m_a, const Matrix& b,
                            const BlockMask& m_b, Matrix& out);

/// ((d ⊗ expand(m_d)) · wᵀ) ⊗ expand(m_out). Backward counterpart of
/// masked_matmul: d is m×p, w is n×p, result is m×n.
Matrix masked_matmul_bt(const Matrix& d, const Matrix& w, const BlockMask& m_d,
                        const BlockMask& m_out);

/// Adds `v` to every row of m.
void add_row_vector(Matrix& m, std::span<const double> v);

/// out[j] += Σ_i m(i, j), rows in ascending order.
void accumulate_col_sums(const Matrix& m, std::span<double> out);

/// y += alpha · x over flat storage.
void axpy(double alpha, const Matrix& x, Matrix& y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

double squared_norm(const Matrix& m);
double squared_norm(std::span<const double> v);

}  // namespace condnet
