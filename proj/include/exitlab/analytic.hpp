#pragma once

#include <cstddef>
#include <stdexcept>

#include "exitlab/models.hpp"
#include "exitlab/trajectory.hpp"

// Closed-form references for Brownian exit problems.
namespace exitlab::analytic {

class OutOfDomain : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mean exit time (R^2 - |x|^2) / (2 n eps) of sqrt(2 eps) W from the ball of
/// radius R in n dimensions.
double mfet_bm_ball(const Vector& x, double radius, std::size_t n, double eps);
Vector mfet_bm_ball_gradient(const Vector& x, double radius, std::size_t n, double eps);

/// E[exp(-alpha tau)] for 1-D Brownian motion leaving (-R, R) from x:
/// cosh(x k) / cosh(R k), k = sqrt(alpha / eps).
double mgf_exit_bm_1d(double x, double radius, double eps, double alpha);
/// -(1/alpha) log mgf_exit_bm_1d, evaluated without overflow for large k R.
double value_1d(double x, double radius, double eps, double alpha);
/// d/dx value_1d = -(k / alpha) tanh(x k).
double value_1d_derivative(double x, double radius, double eps, double alpha);

/// Probability of reaching b before a for driftless diffusion started at x.
double committor_bm_1d(double x, double a, double b);

/// Drift of the singular zero-variance dynamics for the ball MFET.
/// paper_literal: -sqrt(2 eps) x / (R^2 - |x|^2)
/// sigma_times_loggrad: sigma sigma^T grad log phi = -4 eps x / (R^2 - |x|^2)
Vector singular_ais_drift(const Vector& x, double radius, double eps, SingularDriftMode mode);

/// sigma^T grad log(phi-hat(x) + c) for a covariate with known value and
/// gradient. Bounded wherever grad phi-hat is.
Vector regularized_log_control(double phi_value, const Vector& phi_gradient, double sigma, double c);

}  // namespace exitlab::analytic
