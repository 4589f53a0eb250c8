#include "condnet/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "condnet/linalg.hpp"

namespace condnet {

Matrix compute_logits(const PolicyParams& params, const Matrix& s) {
  if (s.cols() != params.n_inputs())
    throw std::invalid_argument("compute_probs: input has " + std::to_string(s.cols()) +
                                " columns, policy expects " + std::to_string(params.n_inputs()));
  if (params.d.size() != params.n_blocks())
    throw std::invalid_argument("compute_probs: bias length differs from block count");
  Matrix q = matmul_bt(s, params.z);
  add_row_vector(q, params.d);
  return q;
}

Matrix compute_probs(const PolicyParams& params, const Matrix& s) {
  Matrix p = compute_logits(params, s);
  for (double& v : p.flat()) v = std::clamp(1.0 / (1.0 + std::exp(-v)), kProbEps, 1.0 - kProbEps);
  return p;
}

BlockMask sample_mask(const Matrix& probs, Rng& rng, std::size_t block_size) {
  BlockMask m(probs.rows(), probs.cols(), block_size);
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t j = 0; j < probs.cols(); ++j) m.set(i, j, rng.uniform() < probs(i, j));
  return m;
}

Vector log_prob(const Matrix& probs, const BlockMask& mask) {
  if (probs.rows() != mask.examples() || probs.cols() != mask.n_blocks())
    throw std::invalid_argument("log_prob: probs " + shape_str(probs) + " vs mask " +
                                std::to_string(mask.examples()) + "x" +
                                std::to_string(mask.n_blocks()));
  Vector out(probs.rows(), 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      const double s = probs(i, j);
      const double u = mask(i, j);
      acc += std::log(s * u + (1.0 - s) * (1.0 - u));
    }
    out[i] = acc;
  }
  return out;
}

PolicyGrad grad_log_prob(const PolicyParams& params, const Matrix& s, const PolicySample& sample,
                         std::span<const double> weights) {
  const std::size_t m = s.rows(), k = params.n_blocks(), n = params.n_inputs();
  if (s.cols() != n || sample.probs.rows() != m || sample.probs.cols() != k ||
      sample.mask.examples() != m || sample.mask.n_blocks() != k)
    throw std::invalid_argument("grad_log_prob: inconsistent shapes (input " + shape_str(s) +
                                ", probs " + shape_str(sample.probs) + ", policy " +
                                shape_str(params.z) + ")");
  if (weights.size() != m)
    throw std::invalid_argument("grad_log_prob: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(m) + " examples");

  // c^T J without forming J: each example adds c_i (u_i - σ_i) ⊗ s_i.
  PolicyGrad g(k, n);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (weights[i] == 0.0) continue;
    const auto srow = s.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      const double coef = weights[i] * inv_m * (sample.mask(i, j) - sample.probs(i, j));
      g.d[j] += coef;
      auto zrow = g.z.row(j);
      for (std::size_t c = 0; c < n; ++c) zrow[c] += coef * srow[c];
    }
  }
  return g;
}

}  // namespace condnet
