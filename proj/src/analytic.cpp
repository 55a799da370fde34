#include "exitlab/analytic.hpp"

#include <cmath>

namespace exitlab::analytic {

double mfet_bm_ball(const Vector& x, double radius, std::size_t n, double eps) {
  const double r2 = x.squaredNorm();
  if (r2 > radius * radius) throw OutOfDomain("mfet_bm_ball: |x| > R");
  return (radius * radius - r2) / (2.0 * static_cast<double>(n) * eps);
}

Vector mfet_bm_ball_gradient(const Vector& x, double radius, std::size_t n, double eps) {
  if (x.squaredNorm() > radius * radius) throw OutOfDomain("mfet_bm_ball_gradient: |x| > R");
  return -x / (static_cast<double>(n) * eps);
}

double mgf_exit_bm_1d(double x, double radius, double eps, double alpha) {
  if (std::abs(x) > radius) throw OutOfDomain("mgf_exit_bm_1d: |x| > R");
  if (alpha == 0.0) return 1.0;
  const double k = std::sqrt(alpha / eps);
  // cosh(xk)/cosh(Rk) = exp(k(|x|-R)) (1 + e^{-2k|x|}) / (1 + e^{-2kR})
  return std::exp(k * (std::abs(x) - radius)) * (1.0 + std::exp(-2.0 * k * std::abs(x))) /
         (1.0 + std::exp(-2.0 * k * radius));
}

double value_1d(double x, double radius, double eps, double alpha) {
  if (std::abs(x) > radius) throw OutOfDomain("value_1d: |x| > R");
  if (!(alpha > 0.0)) throw std::invalid_argument("value_1d: alpha must be > 0");
  const double k = std::sqrt(alpha / eps);
  const double ax = std::abs(x);
  const double log_mgf = k * (ax - radius) + std::log1p(std::exp(-2.0 * k * ax)) -
                         std::log1p(std::exp(-2.0 * k * radius));
  return -log_mgf / alpha;
}

double value_1d_derivative(double x, double radius, double eps, double alpha) {
  if (std::abs(x) > radius) throw OutOfDomain("value_1d_derivative: |x| > R");
  if (!(alpha > 0.0)) throw std::invalid_argument("value_1d_derivative: alpha must be > 0");
  const double k = std::sqrt(alpha / eps);
  return -(k / alpha) * std::tanh(x * k);
}

double committor_bm_1d(double x, double a, double b) {
  if (a == b) throw std::invalid_argument("committor_bm_1d: degenerate interval a = b");
  if (x < a || x > b) throw OutOfDomain("committor_bm_1d: x outside [a, b]");
  return (x - a) / (b - a);
}

Vector singular_ais_drift(const Vector& x, double radius, double eps, SingularDriftMode mode) {
  const double gap = radius * radius - x.squaredNorm();
  if (!(gap > 0.0)) throw OutOfDomain("singular_ais_drift: |x| >= R");
  const double prefactor =
      mode == SingularDriftMode::paper_literal ? std::sqrt(2.0 * eps) : 4.0 * eps;
  return -prefactor * x / gap;
}

Vector regularized_log_control(double phi_value, const Vector& phi_gradient, double sigma, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("regularized_log_control: c must be > 0");
  if (phi_value + c <= 0.0)
    throw std::invalid_argument("regularized_log_control: phi + c must be positive");
  return sigma * phi_gradient / (phi_value + c);
}

}  // namespace exitlab::analytic
