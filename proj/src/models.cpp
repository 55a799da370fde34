#include "exitlab/models.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace exitlab {

Matrix make_tridiag_theta(std::size_t n) {
  if (n == 0) throw std::invalid_argument("make_tridiag_theta: n must be >= 1");
  Matrix theta = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    theta(i, i) = 2.0;
    if (i + 1 < n) {
      theta(i, i + 1) = -1.0;
      theta(i + 1, i) = -1.0;
    }
  }
  return theta;
}

SdeModel::SdeModel(std::size_t dim, double eps) : dim_(dim), eps_(eps) {
  if (dim == 0) throw std::invalid_argument("SdeModel: dimension must be positive");
  if (!(eps > 0.0) || !std::isfinite(eps))
    throw std::invalid_argument("SdeModel: noise scale eps must be > 0");
  sigma_scalar_ = std::sqrt(2.0 * eps);
}

SdeModel SdeModel::brownian(std::size_t dim, double eps) { return SdeModel(dim, eps); }

SdeModel SdeModel::scalar_ou(std::size_t dim, double theta, double eps) {
  if (!(theta > 0.0)) throw std::invalid_argument("SdeModel: OU rate theta must be > 0");
  SdeModel m(dim, eps);
  m.kind_ = DriftKind::scalar_ou;
  m.theta_ = theta;
  return m;
}

SdeModel SdeModel::matrix_ou(const Matrix& theta, double eps) {
  if (theta.rows() != theta.cols() || theta.rows() == 0)
    throw std::invalid_argument("SdeModel: drift matrix must be square and non-empty");
  const auto n = static_cast<std::size_t>(theta.rows());
  for (Eigen::Index i = 0; i < theta.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (theta(i, j) != theta(j, i))
        throw std::invalid_argument("SdeModel: drift matrix must be symmetric");
  SdeModel m(n, eps);
  m.kind_ = DriftKind::matrix_ou;
  m.theta_matrix_ = theta;
  m.theta_sparse_ = theta.sparseView();
  m.theta_sparse_.makeCompressed();
  return m;
}

SdeModel SdeModel::with_drift(std::size_t dim, DriftFn drift, double eps) {
  if (!drift) throw std::invalid_argument("SdeModel: empty drift callback");
  SdeModel m(dim, eps);
  m.kind_ = DriftKind::callback;
  m.callback_ = std::move(drift);
  return m;
}

SdeModel SdeModel::with_sigma(const Matrix& sigma) const {
  const auto n = static_cast<Eigen::Index>(dim_);
  if (sigma.rows() != n || sigma.cols() != n)
    throw std::invalid_argument("SdeModel: sigma must be dim x dim");
  Eigen::FullPivLU<Matrix> lu(sigma);
  if (!lu.isInvertible()) throw std::invalid_argument("SdeModel: sigma must be invertible");
  SdeModel m = *this;
  m.sigma_ = sigma;
  return m;
}

SdeModel SdeModel::without_noise() const {
  SdeModel m = *this;
  m.noise_free_ = true;
  return m;
}

Matrix SdeModel::sigma() const {
  if (sigma_) return *sigma_;
  const auto n = static_cast<Eigen::Index>(dim_);
  return sigma_scalar_ * Matrix::Identity(n, n);
}

void SdeModel::drift(const Vector& x, Vector& out) const {
  switch (kind_) {
    case DriftKind::zero:
      out.setZero();
      break;
    case DriftKind::scalar_ou:
      out = -theta_ * x;
      break;
    case DriftKind::matrix_ou:
      out.noalias() = -(theta_sparse_ * x);
      break;
    case DriftKind::callback:
      callback_(x, out);
      break;
  }
}

Vector SdeModel::drift_eval(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim_)
    throw std::invalid_argument("drift_eval: state dimension does not match the model");
  Vector out(x.size());
  drift(x, out);
  return out;
}

void SdeModel::apply_sigma(const Vector& v, Vector& out) const {
  if (sigma_)
    out.noalias() = *sigma_ * v;
  else
    out = sigma_scalar_ * v;
}

double SdeModel::sigma_t_dot(const Vector& v, const Vector& w) const {
  // (sigma^T v) . w == v . (sigma w)
  if (sigma_) return v.dot(*sigma_ * w);
  return sigma_scalar_ * v.dot(w);
}

std::string to_string(ExitLabel label) {
  switch (label) {
    case ExitLabel::boundary: return "boundary";
    case ExitLabel::left: return "left";
    case ExitLabel::right: return "right";
    case ExitLabel::inner: return "inner";
    case ExitLabel::outer: return "outer";
  }
  return "unknown";
}

Domain Domain::ball(double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("Domain: ball radius must be > 0");
  return Domain(Ball{radius});
}

Domain Domain::interval(double a, double b) {
  if (!(a < b)) throw std::invalid_argument("Domain: interval requires a < b");
  return Domain(Interval{a, b});
}

Domain Domain::annulus(double inner, double outer) {
  if (!(inner > 0.0 && inner < outer))
    throw std::invalid_argument("Domain: annulus requires 0 < r_a < r_b");
  return Domain(Annulus{inner, outer});
}

PointStatus Domain::classify(const Vector& x) const {
  return std::visit(
      [&](const auto& s) -> PointStatus {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          if (x.squaredNorm() < s.radius * s.radius) return {true, std::nullopt};
          return {false, ExitLabel::boundary};
        } else if constexpr (std::is_same_v<T, Interval>) {
          // Only the first coordinate matters for an interval.
          const double v = x(0);
          if (v <= s.a) return {false, ExitLabel::left};
          if (v >= s.b) return {false, ExitLabel::right};
          return {true, std::nullopt};
        } else {
          const double r2 = x.squaredNorm();
          if (r2 <= s.inner * s.inner) return {false, ExitLabel::inner};
          if (r2 >= s.outer * s.outer) return {false, ExitLabel::outer};
          return {true, std::nullopt};
        }
      },
      shape_);
}

std::pair<double, double> Domain::extent() const {
  return std::visit(
      [](const auto& s) -> std::pair<double, double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>)
          return {-s.radius, s.radius};
        else if constexpr (std::is_same_v<T, Interval>)
          return {s.a, s.b};
        else
          return {s.inner, s.outer};
      },
      shape_);
}

PointStatus classify_point(const Domain& domain, const Vector& x) { return domain.classify(x); }

RunningCost RunningCost::zero() { return {}; }

RunningCost RunningCost::one() {
  RunningCost c;
  c.kind_ = Kind::one;
  return c;
}

RunningCost RunningCost::callback(RunningCostFn fn) {
  if (!fn) throw std::invalid_argument("RunningCost: empty callback");
  RunningCost c;
  c.kind_ = Kind::callback;
  c.fn_ = std::move(fn);
  return c;
}

double RunningCost::operator()(const Vector& x) const {
  switch (kind_) {
    case Kind::zero: return 0.0;
    case Kind::one: return 1.0;
    case Kind::callback: return fn_(x);
  }
  return 0.0;
}

TerminalCost TerminalCost::zero() { return {}; }

TerminalCost TerminalCost::indicator(std::optional<ExitLabel> component) {
  TerminalCost c;
  c.kind_ = Kind::indicator;
  c.component_ = component;
  return c;
}

TerminalCost TerminalCost::callback(TerminalCostFn fn) {
  if (!fn) throw std::invalid_argument("TerminalCost: empty callback");
  TerminalCost c;
  c.kind_ = Kind::callback;
  c.fn_ = std::move(fn);
  return c;
}

double TerminalCost::operator()(const Vector& x, std::optional<ExitLabel> label) const {
  switch (kind_) {
    case Kind::zero: return 0.0;
    case Kind::indicator:
      if (!label) return 0.0;
      return (!component_ || *component_ == *label) ? 1.0 : 0.0;
    case Kind::callback: return fn_(x, label);
  }
  return 0.0;
}

namespace {

void spot_check_costs(const PathProblem& p, std::size_t dim) {
  const auto [lo, hi] = p.domain.extent();
  constexpr int kProbes = 33;
  Vector x = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (int k = 0; k < kProbes; ++k) {
    x(0) = lo + (hi - lo) * k / (kProbes - 1);
    const auto status = p.domain.classify(x);
    if (p.running(x) < 0.0)
      throw std::invalid_argument("PathProblem: running cost must be non-negative");
    if (p.terminal(x, status.label) < 0.0)
      throw std::invalid_argument("PathProblem: terminal cost must be non-negative");
  }
}

}  // namespace

PathProblem::PathProblem(Domain domain_, RunningCost running_, TerminalCost terminal_,
                         std::optional<double> horizon_, std::size_t probe_dim)
    : domain(std::move(domain_)),
      running(std::move(running_)),
      terminal(std::move(terminal_)),
      horizon(horizon_) {
  if (horizon && !(*horizon > 0.0))
    throw std::invalid_argument("PathProblem: horizon must be > 0");
  if (probe_dim == 0) throw std::invalid_argument("PathProblem: probe_dim must be >= 1");
  spot_check_costs(*this, probe_dim);
}

PathProblem exit_time_problem(Domain domain) {
  return PathProblem(std::move(domain), RunningCost::one(), TerminalCost::zero());
}

PathProblem exit_probability_problem(Domain domain, std::optional<ExitLabel> component,
                                     std::optional<double> horizon) {
  return PathProblem(std::move(domain), RunningCost::zero(), TerminalCost::indicator(component),
                     horizon);
}

}  // namespace exitlab
