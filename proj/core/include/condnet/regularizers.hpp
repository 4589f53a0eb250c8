#pragma once

#include "condnet/matrix.hpp"

namespace condnet {

/// How ‖x - τ‖₂ is evaluated on a scalar deviation.
enum class PenaltyNorm {
  absolute,  // |x - τ|, subgradient 0 at the kink
  squared,   // (x - τ)²
};

/// A penalty value with its gradient w.r.t. every σ_ij.
struct Penalty {
  double value = 0.0;
  Matrix grad;  // same shape as σ
};

/// Σ_j ‖mean_i σ_ij - τ‖: pushes every block's batch-mean activation to τ.
Penalty l_b(const Matrix& sigma, double tau, PenaltyNorm norm = PenaltyNorm::absolute);

/// mean_i ‖mean_j σ_ij - τ‖: pushes every example's mean activation to τ.
Penalty l_e(const Matrix& sigma, double tau, PenaltyNorm norm = PenaltyNorm::absolute);

/// -Σ_j var_i σ_ij with population variance (divisor m_b). Requires m_b >= 2.
Penalty l_v(const Matrix& sigma);

struct RegularizerTerms {
  Penalty b, e, v;
};

RegularizerTerms regularizer_terms(const Matrix& sigma, double tau,
                                   PenaltyNorm norm = PenaltyNorm::absolute);

}  // namespace condnet
