#include "exitlab/trajectory.hpp"

#include <cmath>
#include <utility>

#include "exitlab/analytic.hpp"

namespace exitlab {

ControlPolicy ControlPolicy::none() { return {}; }

ControlPolicy ControlPolicy::field_gradient(VectorField v) {
  if (!v) throw std::invalid_argument("ControlPolicy: empty field");
  ControlPolicy p;
  p.kind_ = Kind::field_gradient;
  p.field_ = std::move(v);
  return p;
}

ControlPolicy ControlPolicy::constant(std::size_t dim, double value) {
  const auto n = static_cast<Eigen::Index>(dim);
  return field_gradient([n, value](const Vector&, Vector& out) { out.setConstant(n, value); });
}

ControlPolicy ControlPolicy::singular_log_mfet(double radius, double eps, SingularDriftMode mode) {
  if (!(radius > 0.0) || !(eps > 0.0))
    throw std::invalid_argument("ControlPolicy: singular control needs R > 0 and eps > 0");
  ControlPolicy p;
  p.kind_ = Kind::singular_log_mfet;
  p.radius_ = radius;
  p.eps_ = eps;
  p.mode_ = mode;
  return p;
}

ControlPolicy ControlPolicy::pde_control(PdeField value, double alpha, double sigma) {
  ControlPolicy p;
  p.kind_ = Kind::pde_control;
  p.pde_ = std::make_shared<const PdeField>(control_from_value(value, alpha, sigma));
  return p;
}

ControlPolicy ControlPolicy::callback(TimeVectorField u) {
  if (!u) throw std::invalid_argument("ControlPolicy: empty callback");
  ControlPolicy p;
  p.kind_ = Kind::callback;
  p.timed_ = std::move(u);
  return p;
}

void ControlPolicy::evaluate(double t, const Vector& x, Vector& out) const {
  switch (kind_) {
    case Kind::none:
      out.setZero();
      break;
    case Kind::field_gradient:
      field_(x, out);
      break;
    case Kind::singular_log_mfet:
      // sigma u = drift, sigma = sqrt(2 eps) I
      out = analytic::singular_ais_drift(x, radius_, eps_, mode_) / std::sqrt(2.0 * eps_);
      break;
    case Kind::pde_control:
      out.setZero();
      out(0) = pde_->value(x(0));
      break;
    case Kind::callback:
      timed_(t, x, out);
      break;
  }
}

void ControlPolicy::check_covers(double lo, double hi) const {
  if (kind_ != Kind::pde_control) return;
  const auto& g = pde_->grid();
  const double tol = 1e-12 * std::max(1.0, hi - lo);
  if (g.a > lo + tol || g.b < hi - tol)
    throw std::invalid_argument("ControlPolicy: pde-control grid does not cover the domain");
}

CovariateField CovariateField::zero() { return {}; }

CovariateField CovariateField::from_gradient(Gradient grad, std::string name) {
  if (!grad) throw std::invalid_argument("CovariateField: empty gradient");
  CovariateField c;
  c.zero_ = false;
  c.name_ = std::move(name);
  c.grad_ = std::move(grad);
  return c;
}

CovariateField CovariateField::ball_mfet(double radius, std::size_t dim, double eps) {
  if (!(radius > 0.0) || dim == 0 || !(eps > 0.0))
    throw std::invalid_argument("CovariateField: invalid ball MFET parameters");
  const double scale = -1.0 / (static_cast<double>(dim) * eps);
  return from_gradient([scale](const Vector& x, Vector& out) { out = scale * x; }, "ball-mfet");
}

CovariateField CovariateField::from_pde(PdeField field) {
  auto shared = std::make_shared<const PdeField>(std::move(field));
  return from_gradient(
      [shared](const Vector& x, Vector& out) {
        out.setZero();
        out(0) = shared->derivative(x(0));
      },
      "pde");
}

CovariateField CovariateField::radial(PdeField field) {
  auto shared = std::make_shared<const PdeField>(std::move(field));
  return from_gradient(
      [shared](const Vector& x, Vector& out) {
        const double r = x.norm();
        if (r == 0.0) {
          out.setZero();
          return;
        }
        out = (shared->derivative(r) / r) * x;
      },
      "radial-pde");
}

void CovariateField::gradient(const Vector& x, Vector& out) const {
  if (zero_) {
    out.setZero();
    return;
  }
  grad_(x, out);
}

CovariateField perturb_covariate(const CovariateField& base, double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("perturb_covariate: delta must be >= 0");
  auto grad = [base, delta](const Vector& x, Vector& out) {
    base.gradient(x, out);
    if (delta != 0.0) out.array() += delta * x.array().sin();
  };
  return CovariateField::from_gradient(grad, base.name() + "+sin");
}

namespace {

// next = x + (b + sigma u) dt + sigma dW, using `scratch` for sigma products.
void euler_update(const Vector& x, const Vector& drift, const Vector& u, bool controlled,
                  const Vector& dW, double dt, const SdeModel& model, Vector& scratch,
                  Vector& next) {
  if (model.isotropic()) {
    const double s = model.sigma_scalar();
    if (controlled)
      next = x + (drift + s * u) * dt + s * dW;
    else
      next = x + drift * dt + s * dW;
    return;
  }
  next = x + drift * dt;
  if (controlled) {
    model.apply_sigma(u, scratch);
    next += scratch * dt;
  }
  model.apply_sigma(dW, scratch);
  next += scratch;
}

}  // namespace

Vector em_step(const Vector& x, double t, const SdeModel& model, const ControlPolicy& policy,
               double dt, const Vector& dW, std::size_t step_index) {
  const auto n = static_cast<Eigen::Index>(model.dim());
  if (x.size() != n || dW.size() != n)
    throw std::invalid_argument("em_step: dimension mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be > 0");
  Vector drift(n), u = Vector::Zero(n), scratch(n), next(n);
  model.drift(x, drift);
  if (!policy.is_none()) policy.evaluate(t, x, u);
  euler_update(x, drift, u, !policy.is_none(), dW, dt, model, scratch, next);
  if (!next.allFinite()) throw NumericalBlowup("em_step: non-finite state", step_index);
  return next;
}

TrajectoryOutcome run_trajectory(const SdeModel& model, const PathProblem& problem,
                                 const ControlPolicy& policy,
                                 std::span<const CovariateField> covariates, const Vector& x0,
                                 const TrajectorySettings& settings, const RngStream& stream) {
  const auto n = static_cast<Eigen::Index>(model.dim());
  if (x0.size() != n) throw std::invalid_argument("run_trajectory: initial state has wrong dimension");
  if (!(settings.dt > 0.0)) throw std::invalid_argument("run_trajectory: dt must be > 0");
  if (settings.max_steps < 1) throw std::invalid_argument("run_trajectory: max_steps must be >= 1");

  const double dt = settings.dt;
  const double sqrt_dt = std::sqrt(dt);
  const bool controlled = !policy.is_none();
  const bool has_running = !problem.running.is_zero();
  const bool unit_running = problem.running.is_one();

  std::size_t horizon_steps = settings.max_steps;
  bool horizon_binds = false;
  if (problem.horizon) {
    const double ratio = *problem.horizon / dt;
    const double rounded = std::round(ratio);
    const double k = std::abs(ratio - rounded) < 1e-9 * std::max(1.0, ratio) ? rounded : std::ceil(ratio);
    if (static_cast<double>(horizon_steps) >= k) {
      horizon_steps = static_cast<std::size_t>(k);
      horizon_binds = true;
    }
  }

  TrajectoryOutcome out;
  out.martingales.assign(covariates.size(), 0.0);

  Vector x = x0, next(n), drift(n), u = Vector::Zero(n), dW = Vector::Zero(n), grad(n), scratch(n);
  GaussianSource normals(stream);

  auto status = problem.domain.classify(x);
  std::size_t steps = 0;
  while (status.interior && steps < horizon_steps) {
    const double t = static_cast<double>(steps) * dt;
    if (has_running && !unit_running) out.S += problem.running(x) * dt;

    if (!model.noise_free()) {
      normals.fill(dW);
      dW *= sqrt_dt;
    }

    model.drift(x, drift);
    if (controlled) {
      policy.evaluate(t, x, u);
      const double half = 0.5 * u.squaredNorm() * dt;
      out.logL += u.dot(dW) + half;
      out.half_u2 += half;
    }
    for (std::size_t j = 0; j < covariates.size(); ++j) {
      if (covariates[j].is_zero()) continue;
      covariates[j].gradient(x, grad);
      if (!grad.allFinite())
        throw InvalidCovariate("run_trajectory: covariate gradient is not finite inside the domain");
      out.martingales[j] += model.sigma_t_dot(grad, dW);
    }

    euler_update(x, drift, u, controlled, dW, dt, model, scratch, next);
    ++steps;
    if (!next.allFinite()) throw NumericalBlowup("run_trajectory: non-finite state", steps);
    x.swap(next);
    status = problem.domain.classify(x);
  }

  out.steps = steps;
  out.tau = static_cast<double>(steps) * dt;
  if (unit_running) out.S = out.tau;
  if (!status.interior) {
    out.exited = true;
    out.exit_label = status.label;
    out.reason = StopReason::exited;
  } else {
    out.reason = (horizon_binds && steps >= horizon_steps) ? StopReason::horizon : StopReason::budget;
  }
  out.S += problem.terminal(x, out.exit_label);
  return out;
}

}  // namespace exitlab
