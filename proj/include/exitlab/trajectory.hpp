#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitlab/models.hpp"
#include "exitlab/pde.hpp"
#include "exitlab/rng.hpp"

namespace exitlab {

/// Raised when the integrated state stops being finite.
class NumericalBlowup : public std::runtime_error {
 public:
  NumericalBlowup(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class InvalidCovariate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SingularDriftMode { paper_literal, sigma_times_loggrad };

/// Feedback control u(t, x) entering dX = (b + sigma u) dt + sigma dW.
class ControlPolicy {
 public:
  using VectorField = std::function<void(const Vector& x, Vector& out)>;
  using TimeVectorField = std::function<void(double t, const Vector& x, Vector& out)>;

  enum class Kind { none, field_gradient, singular_log_mfet, pde_control, callback };

  static ControlPolicy none();
  /// u_t = v(X_t) for a caller-supplied stationary field.
  static ControlPolicy field_gradient(VectorField v);
  /// Constant control u(x) = value (all components).
  static ControlPolicy constant(std::size_t dim, double value);
  /// Singular zero-variance drift for the Brownian MFET in a ball/interval of
  /// radius R; the drift b_u = sigma u equals singular_ais_drift(x, R, eps, mode).
  static ControlPolicy singular_log_mfet(double radius, double eps, SingularDriftMode mode);
  /// u*(x) = -alpha sigma dV/dx from a 1-D value field on the domain interval.
  static ControlPolicy pde_control(PdeField value, double alpha, double sigma);
  static ControlPolicy callback(TimeVectorField u);

  Kind kind() const { return kind_; }
  bool is_none() const { return kind_ == Kind::none; }

  /// Evaluates u(t, x) into out (size dim).
  void evaluate(double t, const Vector& x, Vector& out) const;

  /// Rejects pde-control policies whose grid does not cover [lo, hi].
  void check_covers(double lo, double hi) const;

 private:
  Kind kind_ = Kind::none;
  VectorField field_;
  TimeVectorField timed_;
  std::shared_ptr<const PdeField> pde_;
  double radius_ = 0.0;
  double eps_ = 0.0;
  SingularDriftMode mode_ = SingularDriftMode::paper_literal;
};

/// Covariate field phi-hat used for the control-variate martingale
/// M = int (sigma^T grad phi-hat)(X) . dW. Only the gradient is needed.
class CovariateField {
 public:
  using Gradient = std::function<void(const Vector& x, Vector& out)>;

  static CovariateField zero();
  static CovariateField from_gradient(Gradient grad, std::string name = "callback");
  /// phi(x) = (R^2 - |x|^2) / (2 n eps), the Brownian MFET in a ball.
  static CovariateField ball_mfet(double radius, std::size_t dim, double eps);
  /// 1-D gridded field (interval problems): gradient is dphi/dx.
  static CovariateField from_pde(PdeField field);
  /// Radial field phi(|x|) on a grid over [0, R]: gradient phi'(r) x / r.
  static CovariateField radial(PdeField field);

  bool is_zero() const { return zero_; }
  const std::string& name() const { return name_; }

  void gradient(const Vector& x, Vector& out) const;

 private:
  bool zero_ = true;
  std::string name_ = "zero";
  Gradient grad_;
};

/// Field with gradient components (grad phi-hat)_i + delta sin(x_i).
CovariateField perturb_covariate(const CovariateField& base, double delta);

enum class StopReason { exited, horizon, budget };

/// Per-path accumulators of one simulated trajectory.
struct TrajectoryOutcome {
  bool exited = false;
  std::optional<ExitLabel> exit_label;
  StopReason reason = StopReason::budget;
  double tau = 0.0;
  /// int f dt + g at the stopping state.
  double S = 0.0;
  /// int u . dW + 1/2 int |u|^2 dt
  double logL = 0.0;
  /// 1/2 int |u|^2 dt
  double half_u2 = 0.0;
  /// One martingale integral per supplied covariate, in order.
  std::vector<double> martingales;
  std::size_t steps = 0;

  /// Martingale of the first covariate (0 when none was supplied).
  double M() const { return martingales.empty() ? 0.0 : martingales.front(); }
};

/// One Euler-Maruyama step x + (b(x) + sigma u(t,x)) dt + sigma dW.
/// `dW` is the Brownian increment itself (already scaled by sqrt(dt)).
Vector em_step(const Vector& x, double t, const SdeModel& model, const ControlPolicy& policy,
               double dt, const Vector& dW, std::size_t step_index = 0);

struct TrajectorySettings {
  double dt = 1e-3;
  std::size_t max_steps = 1'000'000;
};

/// Simulates one path from x0 until exit, the horizon, or max_steps. All
/// integrands use the pre-step (left endpoint) state.
TrajectoryOutcome run_trajectory(const SdeModel& model, const PathProblem& problem,
                                 const ControlPolicy& policy,
                                 std::span<const CovariateField> covariates, const Vector& x0,
                                 const TrajectorySettings& settings, const RngStream& stream);

}  // namespace exitlab
