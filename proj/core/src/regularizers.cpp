#include "condnet/regularizers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace condnet {
namespace {

double norm_value(double dev, PenaltyNorm norm) {
  return norm == PenaltyNorm::absolute ? std::abs(dev) : dev * dev;
}

double norm_slope(double dev, PenaltyNorm norm) {
  if (norm == PenaltyNorm::squared) return 2.0 * dev;
  return dev > 0.0 ? 1.0 : (dev < 0.0 ? -1.0 : 0.0);
}

void require_nonempty(const Matrix& sigma, const char* op) {
  if (sigma.rows() == 0 || sigma.cols() == 0)
    throw std::invalid_argument(std::string(op) + ": empty sigma");
}

}  // namespace

Penalty l_b(const Matrix& sigma, double tau, PenaltyNorm norm) {
  require_nonempty(sigma, "l_b");
  const std::size_t m = sigma.rows(), n = sigma.cols();
  const double inv_m = 1.0 / static_cast<double>(m);
  Penalty p{0.0, Matrix(m, n)};
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += sigma(i, j);
    mean /= static_cast<double>(m);
    const double dev = mean - tau;
    p.value += norm_value(dev, norm);
    const double g = norm_slope(dev, norm) * inv_m;
    for (std::size_t i = 0; i < m; ++i) p.grad(i, j) = g;
  }
  return p;
}

Penalty l_e(const Matrix& sigma, double tau, PenaltyNorm norm) {
  require_nonempty(sigma, "l_e");
  const std::size_t m = sigma.rows(), n = sigma.cols();
  const double inv_m = 1.0 / static_cast<double>(m);
  const double inv_n = 1.0 / static_cast<double>(n);
  Penalty p{0.0, Matrix(m, n)};
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += sigma(i, j);
    mean /= static_cast<double>(n);
    const double dev = mean - tau;
    p.value += norm_value(dev, norm);
    const double g = norm_slope(dev, norm) * inv_m * inv_n;
    for (std::size_t j = 0; j < n; ++j) p.grad(i, j) = g;
  }
  p.value /= static_cast<double>(m);
  return p;
}

Penalty l_v(const Matrix& sigma) {
  const std::size_t m = sigma.rows(), n = sigma.cols();
  if (m < 2) throw std::invalid_argument("l_v: needs at least 2 examples, got " + std::to_string(m));
  const double inv_m = 1.0 / static_cast<double>(m);
  Penalty p{0.0, Matrix(m, n)};
  for (std::size_t j = 0; j < n; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += sigma(i, j);
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double c = sigma(i, j) - mean;
      var += c * c;
      // The mean's own dependence on σ_ij cancels because Σ_i c_i = 0.
      p.grad(i, j) = -2.0 * inv_m * c;
    }
    p.value -= var / static_cast<double>(m);
  }
  return p;
}

RegularizerTerms regularizer_terms(const Matrix& sigma, double tau, PenaltyNorm norm) {
  return {l_b(sigma, tau, norm), l_e(sigma, tau, norm), l_v(sigma)};
}

}  // namespace condnet
