#pragma once

#include <cstddef>

#include "condnet/matrix.hpp"
#include "condnet/rng.hpp"

namespace condnet {

/// σ is kept inside [kProbEps, 1 - kProbEps] so log-probabilities stay finite.
inline constexpr double kProbEps = 1e-7;

/// Sigmoid-Bernoulli block policy of one layer: σ = sigm(s·Zᵀ + d).
struct PolicyParams {
  Matrix z;  // n_blocks × n_inputs
  Vector d;  // n_blocks

  PolicyParams() = default;
  PolicyParams(std::size_t n_blocks, std::size_t n_inputs) : z(n_blocks, n_inputs), d(n_blocks) {}

  std::size_t n_blocks() const noexcept { return z.rows(); }
  std::size_t n_inputs() const noexcept { return z.cols(); }
};

/// Gradient with the same layout as PolicyParams.
using PolicyGrad = PolicyParams;

struct PolicySample {
  Matrix probs;    // m_b × n_blocks
  BlockMask mask;  // sampled u
};

/// σ for a minibatch of inputs (rows of s), clamped to [ε, 1-ε].
Matrix compute_probs(const PolicyParams& params, const Matrix& s);

/// Pre-sigmoid logits s·Zᵀ + d.
Matrix compute_logits(const PolicyParams& params, const Matrix& s);

/// bits(i, j) = 1 iff the next uniform draw is < probs(i, j); draws are
/// consumed row-major.
BlockMask sample_mask(const Matrix& probs, Rng& rng, std::size_t block_size = 1);

/// Per-example Σ_j log(σ_ij u_ij + (1-σ_ij)(1-u_ij)).
Vector log_prob(const Matrix& probs, const BlockMask& mask);

/// (1/m_b) Σ_i weights_i ∇_{Z,d} log π(u_i | s_i), accumulated per example
/// from the closed form ∂ log π / ∂ logit_j = u_j - σ_j.
PolicyGrad grad_log_prob(const PolicyParams& params, const Matrix& s, const PolicySample& sample,
                         std::span<const double> weights);

}  // namespace condnet
