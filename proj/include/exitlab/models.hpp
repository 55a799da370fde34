#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace exitlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Drift callback b(x), writing into a preallocated output vector.
using DriftFn = std::function<void(const Vector& x, Vector& out)>;

enum class DriftKind { zero, scalar_ou, matrix_ou, callback };

/// Tridiagonal matrix with 2 on the diagonal and -1 on the first off-diagonals.
Matrix make_tridiag_theta(std::size_t n);

/// Diffusion dX = b(X) dt + sigma dW with constant invertible sigma.
///
/// The default diffusion is sigma = sqrt(2 eps) I. An explicit sigma may be
/// supplied instead; it must be square and invertible. Instances are
/// immutable once built and can be shared across worker threads.
class SdeModel {
 public:
  static SdeModel brownian(std::size_t dim, double eps);
  static SdeModel scalar_ou(std::size_t dim, double theta, double eps);
  static SdeModel matrix_ou(const Matrix& theta, double eps);
  /// Caller asserts the drift is globally Lipschitz; nothing is verified.
  static SdeModel with_drift(std::size_t dim, DriftFn drift, double eps);

  SdeModel with_sigma(const Matrix& sigma) const;
  /// Test mode: the Brownian increments are replaced by zeros.
  SdeModel without_noise() const;

  std::size_t dim() const { return dim_; }
  double eps() const { return eps_; }
  DriftKind drift_kind() const { return kind_; }
  double theta() const { return theta_; }
  const Matrix& theta_matrix() const { return theta_matrix_; }
  bool noise_free() const { return noise_free_; }

  /// True when sigma = s I for the scalar s returned by sigma_scalar().
  bool isotropic() const { return !sigma_.has_value(); }
  double sigma_scalar() const { return sigma_scalar_; }
  Matrix sigma() const;

  /// b(x) into out; out must already have size dim().
  void drift(const Vector& x, Vector& out) const;
  /// Checked variant of drift().
  Vector drift_eval(const Vector& x) const;

  /// out = sigma * v
  void apply_sigma(const Vector& v, Vector& out) const;
  /// sigma^T v . w without allocating for the isotropic case.
  double sigma_t_dot(const Vector& v, const Vector& w) const;

 private:
  SdeModel(std::size_t dim, double eps);

  std::size_t dim_ = 0;
  double eps_ = 0.0;
  double sigma_scalar_ = 0.0;
  DriftKind kind_ = DriftKind::zero;
  double theta_ = 0.0;
  Matrix theta_matrix_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> theta_sparse_;
  DriftFn callback_;
  std::optional<Matrix> sigma_;
  bool noise_free_ = false;
};

enum class ExitLabel { boundary, left, right, inner, outer };

std::string to_string(ExitLabel label);

struct Ball {
  double radius;
};

struct Interval {
  double a;
  double b;
};

struct Annulus {
  double inner;
  double outer;
};

/// Classification of a point against an open domain. Boundary points are
/// exited.
struct PointStatus {
  bool interior;
  std::optional<ExitLabel> label;
};

class Domain {
 public:
  static Domain ball(double radius);
  static Domain interval(double a, double b);
  static Domain annulus(double inner, double outer);

  const std::variant<Ball, Interval, Annulus>& shape() const { return shape_; }

  PointStatus classify(const Vector& x) const;
  bool contains(const Vector& x) const { return classify(x).interior; }

  /// Bounds on the "radial" coordinate used by 1-D fields: [a,b] for an
  /// interval, [-R,R] for a ball, [r_a, r_b] for an annulus.
  std::pair<double, double> extent() const;

 private:
  explicit Domain(std::variant<Ball, Interval, Annulus> shape) : shape_(shape) {}
  std::variant<Ball, Interval, Annulus> shape_;
};

PointStatus classify_point(const Domain& domain, const Vector& x);

using RunningCostFn = std::function<double(const Vector& x)>;
using TerminalCostFn =
    std::function<double(const Vector& x, std::optional<ExitLabel> label)>;

/// Running cost f(x) >= 0.
class RunningCost {
 public:
  static RunningCost zero();
  static RunningCost one();
  static RunningCost callback(RunningCostFn fn);

  double operator()(const Vector& x) const;
  bool is_zero() const { return kind_ == Kind::zero; }
  bool is_one() const { return kind_ == Kind::one; }

 private:
  enum class Kind { zero, one, callback };
  Kind kind_ = Kind::zero;
  RunningCostFn fn_;
};

/// Terminal cost g evaluated at the stopping state.
class TerminalCost {
 public:
  static TerminalCost zero();
  /// 1 when the path stopped by exiting through the given component.
  /// std::nullopt means any boundary component.
  static TerminalCost indicator(std::optional<ExitLabel> component);
  static TerminalCost callback(TerminalCostFn fn);

  double operator()(const Vector& x, std::optional<ExitLabel> label) const;
  bool is_zero() const { return kind_ == Kind::zero; }

 private:
  enum class Kind { zero, indicator, callback };
  Kind kind_ = Kind::zero;
  std::optional<ExitLabel> component_;
  TerminalCostFn fn_;
};

/// S(X) = int_0^tau f(X_s) ds + g(X_tau), tau = min(tau_B, T).
///
/// Callback costs are spot-checked for non-negativity at construction on
/// points along the first coordinate axis of a `probe_dim`-dimensional space.
struct PathProblem {
  PathProblem(Domain domain, RunningCost running, TerminalCost terminal,
              std::optional<double> horizon = std::nullopt, std::size_t probe_dim = 1);

  Domain domain;
  RunningCost running;
  TerminalCost terminal;
  std::optional<double> horizon;
};

/// Mean first exit time: f = 1, g = 0.
PathProblem exit_time_problem(Domain domain);
/// P(exit through `component` before the horizon): f = 0, g = indicator.
PathProblem exit_probability_problem(Domain domain, std::optional<ExitLabel> component,
                                     std::optional<double> horizon = std::nullopt);

}  // namespace exitlab
