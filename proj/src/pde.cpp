#include "exitlab/pde.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

namespace exitlab {

Grid1D::Grid1D(double a_, double b_, std::size_t m_) : a(a_), b(b_), m(m_) {
  if (!(a < b)) throw std::invalid_argument("Grid1D: requires a < b");
  if (m < 3) throw std::invalid_argument("Grid1D: requires at least 3 interior nodes");
}

PdeField::PdeField(Grid1D grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.nodes())
    throw std::invalid_argument("PdeField: value count does not match the grid");
  for (double v : values_)
    if (!std::isfinite(v)) throw InvalidField("PdeField: non-finite nodal value");
}

namespace {

// Cell index i and weight w such that x = (1-w) node(i) + w node(i+1).
std::size_t locate(const Grid1D& g, double x, double& w) {
  const double s = (x - g.a) / g.h();
  if (s <= 0.0) {
    w = 0.0;
    return 0;
  }
  const auto last = static_cast<double>(g.m + 1);
  if (s >= last) {
    w = 1.0;
    return g.m;
  }
  const auto i = static_cast<std::size_t>(s);
  w = s - static_cast<double>(i);
  return i;
}

struct Coefficients {
  double diffusion;  // D = sigma^2 / 2
  std::vector<double> drift;
};

Coefficients coefficients_1d(const SdeModel& model, const Grid1D& grid) {
  if (model.dim() != 1) throw std::invalid_argument("pde: the model must be one-dimensional");
  const double s = model.sigma()(0, 0);
  Coefficients c{0.5 * s * s, std::vector<double>(grid.nodes())};
  Vector x(1), b(1);
  for (std::size_t i = 0; i < grid.nodes(); ++i) {
    x(0) = grid.node(i);
    model.drift(x, b);
    c.drift[i] = b(0);
  }
  return c;
}

// Assembles -(D u'' + b u') + reaction u = rhs on the interior with Dirichlet
// data and solves it.
PdeField solve_elliptic(const Coefficients& c, const Grid1D& grid, const std::vector<double>& reaction,
                        const std::vector<double>& source, double left, double right) {
  const std::size_t m = grid.m;
  const double h = grid.h();
  const double dh2 = c.diffusion / (h * h);
  std::vector<double> sub(m), diag(m), super(m), rhs(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = k + 1;
    const double adv = c.drift[i] / (2.0 * h);
    sub[k] = -dh2 + adv;
    diag[k] = 2.0 * dh2 + reaction[i];
    super[k] = -dh2 - adv;
    rhs[k] = source[i];
  }
  rhs[0] -= sub[0] * left;
  rhs[m - 1] -= super[m - 1] * right;
  auto interior = solve_tridiagonal(sub, diag, super, std::move(rhs));
  std::vector<double> values(grid.nodes());
  values.front() = left;
  values.back() = right;
  std::copy(interior.begin(), interior.end(), values.begin() + 1);
  return PdeField(grid, std::move(values));
}

std::vector<double> sample(const ScalarFn& f, const Grid1D& grid) {
  std::vector<double> v(grid.nodes());
  for (std::size_t i = 0; i < grid.nodes(); ++i) v[i] = f(grid.node(i));
  return v;
}

}  // namespace

double PdeField::value(double x) const {
  double w = 0.0;
  const std::size_t i = locate(grid_, x, w);
  if (w == 0.0) return values_[i];
  return (1.0 - w) * values_[i] + w * values_[i + 1];
}

double PdeField::derivative_at_node(std::size_t i) const {
  const double h = grid_.h();
  const std::size_t last = grid_.m + 1;
  if (i == 0) return (-3.0 * values_[0] + 4.0 * values_[1] - values_[2]) / (2.0 * h);
  if (i == last)
    return (3.0 * values_[last] - 4.0 * values_[last - 1] + values_[last - 2]) / (2.0 * h);
  return (values_[i + 1] - values_[i - 1]) / (2.0 * h);
}

std::vector<double> PdeField::derivatives() const {
  std::vector<double> d(values_.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = derivative_at_node(i);
  return d;
}

double PdeField::derivative(double x) const {
  double w = 0.0;
  const std::size_t i = locate(grid_, x, w);
  if (w == 0.0) return derivative_at_node(i);
  return (1.0 - w) * derivative_at_node(i) + w * derivative_at_node(i + 1);
}

void PdeField::write_csv(std::ostream& out) const {
  out << "x,value\n";
  for (std::size_t i = 0; i < values_.size(); ++i)
    out << fmt::format("{:.17g},{:.17g}\n", grid_.node(i), values_[i]);
}

PdeField PdeField::read_csv(std::istream& in) {
  std::string line;
  std::vector<double> xs, vs;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == 'x') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidField("PdeField: malformed CSV row: " + line);
    xs.push_back(std::stod(line.substr(0, comma)));
    vs.push_back(std::stod(line.substr(comma + 1)));
  }
  if (xs.size() < 5) throw InvalidField("PdeField: CSV needs at least 5 nodes");
  Grid1D grid(xs.front(), xs.back(), xs.size() - 2);
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (std::abs(xs[i] - grid.node(i)) > 1e-9 * std::max(1.0, std::abs(xs[i])))
      throw InvalidField("PdeField: CSV nodes are not uniformly spaced");
  return PdeField(grid, std::move(vs));
}

TimeField::TimeField(std::vector<double> times, std::vector<PdeField> slices)
    : times_(std::move(times)), slices_(std::move(slices)) {
  if (times_.size() != slices_.size() || times_.size() < 2)
    throw std::invalid_argument("TimeField: need matching times and slices (at least two)");
}

std::size_t TimeField::level_below(double t, double& weight) const {
  if (t <= times_.front()) {
    weight = 0.0;
    return 0;
  }
  if (t >= times_.back()) {
    weight = 1.0;
    return times_.size() - 2;
  }
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const auto k = static_cast<std::size_t>(it - times_.begin()) - 1;
  weight = (t - times_[k]) / (times_[k + 1] - times_[k]);
  return k;
}

double TimeField::value(double t, double x) const {
  double w = 0.0;
  const std::size_t k = level_below(t, w);
  return (1.0 - w) * slices_[k].value(x) + w * slices_[k + 1].value(x);
}

double TimeField::derivative(double t, double x) const {
  double w = 0.0;
  const std::size_t k = level_below(t, w);
  return (1.0 - w) * slices_[k].derivative(x) + w * slices_[k + 1].derivative(x);
}

std::vector<double> solve_tridiagonal(const std::vector<double>& sub, const std::vector<double>& diag,
                                      const std::vector<double>& super, std::vector<double> rhs) {
  const std::size_t n = diag.size();
  if (n == 0 || sub.size() != n || super.size() != n || rhs.size() != n)
    throw std::invalid_argument("solve_tridiagonal: inconsistent sizes");
  std::vector<double> c(n);
  double pivot = diag[0];
  if (pivot == 0.0 || !std::isfinite(pivot)) throw SolverFailure("solve_tridiagonal: zero pivot at row 0");
  c[0] = super[0] / pivot;
  rhs[0] /= pivot;
  for (std::size_t i = 1; i < n; ++i) {
    pivot = diag[i] - sub[i] * c[i - 1];
    if (pivot == 0.0 || !std::isfinite(pivot))
      throw SolverFailure("solve_tridiagonal: zero pivot at row " + std::to_string(i));
    c[i] = super[i] / pivot;
    rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / pivot;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
  return rhs;
}

PdeField solve_linear_bvp(const SdeModel& model, const ScalarFn& f, double g_left, double g_right,
                          const Grid1D& grid) {
  const auto c = coefficients_1d(model, grid);
  return solve_elliptic(c, grid, std::vector<double>(grid.nodes(), 0.0), sample(f, grid), g_left,
                        g_right);
}

PdeField solve_mgf_bvp(const SdeModel& model, const ScalarFn& f, double g_left, double g_right,
                       double alpha, const Grid1D& grid) {
  if (alpha < 0.0) throw std::invalid_argument("solve_mgf_bvp: alpha must be >= 0");
  const auto c = coefficients_1d(model, grid);
  auto reaction = sample(f, grid);
  for (double& r : reaction) r *= alpha;
  return solve_elliptic(c, grid, reaction, std::vector<double>(grid.nodes(), 0.0),
                        std::exp(-alpha * g_left), std::exp(-alpha * g_right));
}

PdeField value_from_mgf(const PdeField& h, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("value_from_mgf: alpha must be > 0");
  std::vector<double> v(h.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(h[i] > 0.0))
      throw InvalidField(fmt::format("value_from_mgf: non-positive MGF value {} at node {}", h[i], i));
    v[i] = -std::log(h[i]) / alpha;
  }
  return PdeField(h.grid(), std::move(v));
}

PdeField control_from_value(const PdeField& value, double alpha, double sigma) {
  if (!(alpha > 0.0)) throw std::invalid_argument("control_from_value: alpha must be > 0");
  auto u = value.derivatives();
  for (double& v : u) v *= -alpha * sigma;
  return PdeField(value.grid(), std::move(u));
}

TimeField solve_parabolic_fk(const SdeModel& model, double horizon, std::size_t time_steps,
                             const Grid1D& grid) {
  if (!(horizon > 0.0)) throw std::invalid_argument("solve_parabolic_fk: horizon must be > 0");
  if (time_steps == 0) throw std::invalid_argument("solve_parabolic_fk: need at least one time step");
  const auto c = coefficients_1d(model, grid);
  const std::size_t m = grid.m;
  const double h = grid.h();
  const double dtau = horizon / static_cast<double>(time_steps);
  const double dh2 = c.diffusion / (h * h);

  std::vector<double> sub(m), diag(m), super(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double adv = c.drift[k + 1] / (2.0 * h);
    sub[k] = dtau * (-dh2 + adv);
    diag[k] = 1.0 + dtau * 2.0 * dh2;
    super[k] = dtau * (-dh2 - adv);
  }

  std::vector<double> terminal(grid.nodes(), 0.0);
  terminal.front() = 1.0;
  terminal.back() = 1.0;
  std::vector<PdeField> slices(time_steps + 1, PdeField(grid, terminal));
  std::vector<double> times(time_steps + 1);
  for (std::size_t k = 0; k <= time_steps; ++k)
    times[k] = horizon * static_cast<double>(k) / static_cast<double>(time_steps);

  std::vector<double> current = terminal;
  for (std::size_t level = time_steps; level-- > 0;) {
    std::vector<double> rhs(current.begin() + 1, current.end() - 1);
    rhs[0] -= sub[0] * 1.0;
    rhs[m - 1] -= super[m - 1] * 1.0;
    auto interior = solve_tridiagonal(sub, diag, super, std::move(rhs));
    std::copy(interior.begin(), interior.end(), current.begin() + 1);
    current.front() = 1.0;
    current.back() = 1.0;
    slices[level] = PdeField(grid, current);
  }
  return TimeField(std::move(times), std::move(slices));
}

double hjb_residual(const PdeField& value, const SdeModel& model, const ScalarFn& f, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("hjb_residual: alpha must be > 0");
  const auto& grid = value.grid();
  const auto c = coefficients_1d(model, grid);
  const double h = grid.h();
  const double sigma2 = 2.0 * c.diffusion;
  double worst = 0.0;
  for (std::size_t i = 1; i <= grid.m; ++i) {
    const double d1 = (value[i + 1] - value[i - 1]) / (2.0 * h);
    const double d2 = (value[i + 1] - 2.0 * value[i] + value[i - 1]) / (h * h);
    const double r = c.diffusion * d2 + c.drift[i] * d1 - 0.5 * alpha * sigma2 * d1 * d1 + f(grid.node(i));
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

double max_error(const PdeField& field, const ScalarFn& reference, bool interior_only) {
  const auto& grid = field.grid();
  const std::size_t first = interior_only ? 1 : 0;
  const std::size_t last = interior_only ? grid.m : grid.m + 1;
  double worst = 0.0;
  for (std::size_t i = first; i <= last; ++i)
    worst = std::max(worst, std::abs(field[i] - reference(grid.node(i))));
  return worst;
}

}  // namespace exitlab
