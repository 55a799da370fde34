#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "exitlab/models.hpp"

namespace exitlab {

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidField : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform grid on [a, b] with m interior nodes and spacing h = (b-a)/(m+1).
/// Node 0 is a and node m+1 is b.
struct Grid1D {
  Grid1D(double a, double b, std::size_t m);

  double a;
  double b;
  std::size_t m;

  double h() const { return (b - a) / static_cast<double>(m + 1); }
  std::size_t nodes() const { return m + 2; }
  double node(std::size_t i) const { return a + h() * static_cast<double>(i); }
};

/// Nodal values on a Grid1D, boundary nodes included.
class PdeField {
 public:
  PdeField(Grid1D grid, std::vector<double> values);

  const Grid1D& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Linear interpolation; clamps to the end nodes outside [a, b].
  double value(double x) const;
  /// Central difference at interior nodes, second-order one-sided at the ends.
  double derivative_at_node(std::size_t i) const;
  std::vector<double> derivatives() const;
  /// Linear interpolation of the nodal derivatives.
  double derivative(double x) const;

  /// Two-column CSV "x,value".
  void write_csv(std::ostream& out) const;
  static PdeField read_csv(std::istream& in);

 private:
  Grid1D grid_;
  std::vector<double> values_;
};

/// Solution of a backward parabolic problem, one slice per time level.
class TimeField {
 public:
  TimeField(std::vector<double> times, std::vector<PdeField> slices);

  const std::vector<double>& times() const { return times_; }
  const std::vector<PdeField>& slices() const { return slices_; }
  const PdeField& at_level(std::size_t k) const { return slices_[k]; }

  /// Linear in t between levels, linear in x within a slice.
  double value(double t, double x) const;
  double derivative(double t, double x) const;

 private:
  std::size_t level_below(double t, double& weight) const;

  std::vector<double> times_;
  std::vector<PdeField> slices_;
};

using ScalarFn = std::function<double(double x)>;

/// Thomas algorithm for sub/diag/super diagonals (sub[0], super[n-1] unused).
std::vector<double> solve_tridiagonal(const std::vector<double>& sub, const std::vector<double>& diag,
                                      const std::vector<double>& super, std::vector<double> rhs);

/// -(D phi'' + b phi') = f on (a, b), phi(a) = g_left, phi(b) = g_right, with
/// D = sigma^2 / 2 (= eps for the default diffusion).
PdeField solve_linear_bvp(const SdeModel& model, const ScalarFn& f, double g_left, double g_right,
                          const Grid1D& grid);

/// D h'' + b h' - alpha f h = 0 with h = exp(-alpha g) on the boundary, so that
/// h(x) = E[exp(-alpha S) | X_0 = x].
PdeField solve_mgf_bvp(const SdeModel& model, const ScalarFn& f, double g_left, double g_right,
                       double alpha, const Grid1D& grid);

/// V = -(1/alpha) log h nodewise.
PdeField value_from_mgf(const PdeField& h, double alpha);

/// u*(x) = -alpha sigma V'(x) at every node.
PdeField control_from_value(const PdeField& value, double alpha, double sigma);

/// psi_t + D psi'' + b psi' = 0 backward from psi(T, .) = 0 with psi = 1 at
/// both ends; implicit Euler with K steps. Level k is time k T / K.
TimeField solve_parabolic_fk(const SdeModel& model, double horizon, std::size_t time_steps,
                             const Grid1D& grid);

/// max over interior nodes of |D V'' + b V' - (alpha/2) sigma^2 (V')^2 + f|.
double hjb_residual(const PdeField& value, const SdeModel& model, const ScalarFn& f, double alpha);

/// Max absolute nodal difference between a field and a reference function.
double max_error(const PdeField& field, const ScalarFn& reference, bool interior_only = false);

}  // namespace exitlab
