#include "exitlab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "exitlab/analytic.hpp"
#include "exitlab/estimators.hpp"

namespace exitlab {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Stream run index reserved for auxiliary draws (directions, pilots).
constexpr std::uint64_t kAuxRun = 0xFFFFFFFFull;

struct KindName {
  ExperimentKind kind;
  const char* name;
};
constexpr KindName kKinds[] = {
    {ExperimentKind::fig1, "fig1"},           {ExperimentKind::fig2, "fig2"},
    {ExperimentKind::pathology, "pathology"}, {ExperimentKind::alpha_sweep, "alpha-sweep"},
    {ExperimentKind::cov_limit, "cov-limit"}, {ExperimentKind::pde_check, "pde-check"},
    {ExperimentKind::custom, "custom"},
};

template <class T>
const T& need(const std::optional<T>& v, const char* name) {
  if (!v) throw ConfigError(fmt::format("config: '{}' is required", name));
  return *v;
}

bool has(const std::vector<std::string>& list, const std::string& item) {
  return std::find(list.begin(), list.end(), item) != list.end();
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: bad value for '{}': {}", key, e.what()));
  }
}

const std::vector<std::string> kReportColumns{"estimate",     "ci_low",   "ci_high",           "sample_std",
                                              "relative_error", "per_path_std", "mean_tau", "non_exit_fraction",
                                              "total_steps"};

std::vector<Cell> report_cells(const EstimatorReport& r) {
  return {r.summary.mean,
          r.summary.ci_low,
          r.summary.ci_high,
          r.summary.sample_std,
          r.summary.relative_error_defined ? r.summary.relative_error : kNaN,
          r.per_path_std,
          r.mean_tau,
          r.non_exit_fraction,
          static_cast<std::int64_t>(r.total_steps)};
}

std::vector<std::string> with_report_columns(std::vector<std::string> leading) {
  leading.insert(leading.end(), kReportColumns.begin(), kReportColumns.end());
  return leading;
}

std::vector<Cell> join(std::vector<Cell> leading, const EstimatorReport& r) {
  auto tail = report_cells(r);
  leading.insert(leading.end(), tail.begin(), tail.end());
  return leading;
}

void add_runs(Table& runs, const Cell& point, const EstimatorReport& r) {
  for (std::size_t i = 0; i < r.per_run_estimates.size(); ++i)
    runs.add({point, r.kind, static_cast<std::int64_t>(i), r.per_run_estimates[i]});
}

Table runs_table(const std::string& point_column) { return Table({point_column, "estimator", "run", "estimate"}); }

SdeModel build_model(const ExperimentConfig& c) {
  const std::size_t n = need(c.n, "n");
  const double eps = need(c.eps, "eps");
  const ThetaSpec theta = need(c.theta, "theta");
  if (theta.tridiag) return SdeModel::matrix_ou(make_tridiag_theta(n), eps);
  if (theta.value == 0.0) return SdeModel::brownian(n, eps);
  return SdeModel::scalar_ou(n, theta.value, eps);
}

bool is_brownian(const ExperimentConfig& c) { return !c.theta->tridiag && c.theta->value == 0.0; }

Domain build_domain(const ExperimentConfig& c) {
  if (c.interval) return Domain::interval((*c.interval)[0], (*c.interval)[1]);
  return Domain::ball(need(c.R, "R"));
}

// Endpoints of the 1-D domain.
std::pair<double, double> interval_of(const ExperimentConfig& c) {
  if (c.interval) return {(*c.interval)[0], (*c.interval)[1]};
  const double r = need(c.R, "R");
  return {-r, r};
}

SimulationSettings base_settings(const ExperimentConfig& c, Vector x0, unsigned workers) {
  SimulationSettings s;
  s.x0 = std::move(x0);
  s.dt = need(c.dt, "dt");
  s.paths_per_run = need(c.N, "N");
  s.runs = need(c.M, "M");
  s.seed = need(c.seed, "seed");
  s.workers = std::max(1u, workers);
  return s;
}

Vector point_on_axis(std::size_t n, double radius) {
  Vector x = Vector::Zero(static_cast<Eigen::Index>(n));
  x(0) = radius;
  return x;
}

// Mean exit steps of a short uncontrolled pilot, used when no closed form applies.
double pilot_mean_exit_time(const SdeModel& model, const PathProblem& problem, const Vector& x0, double dt,
                            std::uint64_t seed, unsigned workers) {
  SimulationSettings s;
  s.x0 = x0;
  s.dt = dt;
  s.paths_per_run = 32;
  s.runs = 1;
  s.seed = seed ^ 0x9e3779b97f4a7c15ull;
  s.max_steps = 20'000'000;
  s.workers = workers;
  return mc_estimate(problem, model, s).mean_tau;
}

// Brownian mean exit time from x, or NaN when no closed form is available.
double analytic_mfet(const ExperimentConfig& c, const Vector& x) {
  if (!is_brownian(c)) return kNaN;
  const double eps = *c.eps;
  if (c.interval) {
    const double a = (*c.interval)[0], b = (*c.interval)[1];
    return std::max(0.0, (x(0) - a) * (b - x(0)) / (2.0 * eps));
  }
  const double r = *c.R;
  return std::max(0.0, (r * r - x.squaredNorm()) / (2.0 * static_cast<double>(*c.n) * eps));
}

std::size_t step_budget(const ExperimentConfig& c, const SdeModel& model, const PathProblem& problem,
                        const std::vector<Vector>& points, unsigned workers) {
  if (c.max_steps) return *c.max_steps;
  if (problem.horizon) return static_cast<std::size_t>(std::ceil(*problem.horizon / *c.dt)) + 1;
  double mean = 0.0;
  for (const auto& x : points) mean = std::max(mean, analytic_mfet(c, x));
  if (std::isnan(mean) || !is_brownian(c)) {
    const auto closest = std::min_element(points.begin(), points.end(),
                                          [](const Vector& a, const Vector& b) { return a.norm() < b.norm(); });
    mean = pilot_mean_exit_time(model, problem, *closest, *c.dt, *c.seed, workers);
  }
  return default_max_steps(std::max(mean, *c.dt), *c.dt);
}

PlotSeries series_of(const std::string& name) { return PlotSeries{name, {}, {}, {}, {}, true}; }

void push_point(PlotSeries& s, double x, const EstimatorReport& r) {
  s.x.push_back(x);
  s.y.push_back(r.summary.mean);
  s.low.push_back(r.summary.ci_low);
  s.high.push_back(r.summary.ci_high);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

std::vector<double> linspace_radii(double step, std::size_t count) {
  std::vector<double> r(count);
  for (std::size_t i = 0; i < count; ++i) r[i] = step * static_cast<double>(i);
  return r;
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "custom";
}

ExperimentKind parse_experiment(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::string to_string(Preset preset) { return preset == Preset::desk ? "desk" : "paper"; }

Preset parse_preset(const std::string& name) {
  if (name == "desk") return Preset::desk;
  if (name == "paper") return Preset::paper;
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  static const std::set<std::string> known{
      "experiment", "preset",   "n",          "theta",     "eps",      "R",      "interval",
      "problem",    "exit_side", "horizon",   "estimators", "N",       "M",      "dt",
      "max_steps",  "seed",     "radii",      "initial_points", "alphas", "deltas", "controls",
      "c",          "grid_m",   "budget_factor", "output"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + key + "'");

  ExperimentConfig c;
  std::optional<std::string> experiment, preset;
  read(j, "experiment", experiment);
  if (experiment) c.experiment = parse_experiment(*experiment);
  read(j, "preset", preset);
  if (preset) c.preset = parse_preset(*preset);
  read(j, "n", c.n);
  if (j.contains("theta")) {
    const auto& t = j.at("theta");
    if (t.is_number()) {
      c.theta = ThetaSpec{false, t.get<double>()};
    } else if (t.is_string() && t.get<std::string>() == "tridiag") {
      c.theta = ThetaSpec{true, 0.0};
    } else {
      throw ConfigError("config: 'theta' must be a number or \"tridiag\"");
    }
  }
  read(j, "eps", c.eps);
  read(j, "R", c.R);
  read(j, "interval", c.interval);
  read(j, "problem", c.problem);
  read(j, "exit_side", c.exit_side);
  read(j, "horizon", c.horizon);
  read(j, "estimators", c.estimators);
  read(j, "N", c.N);
  read(j, "M", c.M);
  read(j, "dt", c.dt);
  read(j, "max_steps", c.max_steps);
  read(j, "seed", c.seed);
  read(j, "radii", c.radii);
  read(j, "initial_points", c.initial_points);
  read(j, "alphas", c.alphas);
  read(j, "deltas", c.deltas);
  read(j, "controls", c.controls);
  read(j, "c", c.c);
  read(j, "grid_m", c.grid_m);
  read(j, "budget_factor", c.budget_factor);
  read(j, "output", c.output);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  if (c.preset) j["preset"] = to_string(*c.preset);
  auto put = [&j](const char* key, const auto& opt) {
    if (opt) j[key] = *opt;
  };
  put("n", c.n);
  if (c.theta) {
    if (c.theta->tridiag)
      j["theta"] = "tridiag";
    else
      j["theta"] = c.theta->value;
  }
  put("eps", c.eps);
  put("R", c.R);
  put("interval", c.interval);
  put("problem", c.problem);
  put("exit_side", c.exit_side);
  put("horizon", c.horizon);
  put("estimators", c.estimators);
  put("N", c.N);
  put("M", c.M);
  put("dt", c.dt);
  put("max_steps", c.max_steps);
  put("seed", c.seed);
  put("radii", c.radii);
  put("initial_points", c.initial_points);
  put("alphas", c.alphas);
  put("deltas", c.deltas);
  put("controls", c.controls);
  put("c", c.c);
  put("grid_m", c.grid_m);
  put("budget_factor", c.budget_factor);
  put("output", c.output);
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  return config_from_json(j);
}

ExperimentConfig apply_preset(ExperimentConfig c) {
  const Preset preset = c.preset.value_or(Preset::desk);
  c.preset = preset;
  const bool paper = preset == Preset::paper;
  auto fill = [](auto& opt, auto value) {
    if (!opt) opt = value;
  };
  auto fill_domain_ball = [&c](double r) {
    if (!c.R && !c.interval) c.R = r;
  };
  auto fill_domain_interval = [&c](double a, double b) {
    if (!c.R && !c.interval) c.interval = std::vector<double>{a, b};
  };
  using Strings = std::vector<std::string>;
  using Reals = std::vector<double>;

  fill(c.seed, std::uint64_t{1});
  fill(c.eps, 0.05);
  fill(c.c, 0.0);

  switch (c.experiment) {
    case ExperimentKind::fig1:
      fill(c.n, std::size_t{100});
      fill(c.theta, ThetaSpec{});
      fill_domain_ball(10.0);
      fill(c.estimators, Strings{"mc", "cov", "pcov"});
      fill(c.N, std::size_t{10});
      fill(c.M, std::size_t{paper ? 100u : 20u});
      fill(c.dt, paper ? 1e-4 : 1e-3);
      fill(c.radii, linspace_radii(1.0, 10));
      fill(c.deltas, Reals{0.25, 1.0});
      break;
    case ExperimentKind::fig2:
      fill(c.n, std::size_t{paper ? 100u : 10u});
      fill(c.theta, ThetaSpec{true, 0.0});
      fill_domain_ball(paper ? 10.0 : 1.5);
      fill(c.estimators, Strings{"mc", "cov"});
      fill(c.N, std::size_t{10});
      fill(c.M, std::size_t{paper ? 100u : 20u});
      fill(c.dt, 1e-3);
      fill(c.radii, paper ? linspace_radii(1.0, 10) : linspace_radii(0.15, 10));
      break;
    case ExperimentKind::pathology:
      fill(c.n, std::size_t{1});
      fill(c.theta, ThetaSpec{});
      fill_domain_interval(-1.0, 1.0);
      fill(c.estimators, Strings{"mc", "ais-paper-literal", "ais-sigma-loggrad"});
      fill(c.N, std::size_t{100});
      fill(c.M, std::size_t{1});
      fill(c.dt, paper ? 1e-4 : 1e-3);
      fill(c.budget_factor, 10.0);
      break;
    case ExperimentKind::alpha_sweep:
      fill(c.n, std::size_t{1});
      fill(c.theta, ThetaSpec{});
      fill_domain_interval(-1.0, 1.0);
      fill(c.alphas, Reals{0.4, 0.2, 0.1, 0.05, 0.025});
      fill(c.estimators, Strings{"mc", "cov", "risk"});
      fill(c.N, std::size_t{paper ? 10u : 50u});
      fill(c.M, std::size_t{paper ? 100u : 20u});
      fill(c.dt, paper ? 1e-4 : 1e-3);
      fill(c.grid_m, std::size_t{1999});
      break;
    case ExperimentKind::cov_limit:
      fill(c.n, std::size_t{1});
      fill(c.theta, ThetaSpec{});
      fill_domain_interval(-1.0, 1.0);
      fill(c.alphas, Reals{0.4, 0.2, 0.1, 0.05});
      fill(c.estimators, Strings{"mc", "cov", "risk"});
      fill(c.N, std::size_t{100});
      fill(c.M, std::size_t{100});
      fill(c.dt, paper ? 1e-4 : 1e-3);
      fill(c.grid_m, std::size_t{1999});
      break;
    case ExperimentKind::pde_check:
      fill(c.n, std::size_t{1});
      fill(c.theta, ThetaSpec{});
      fill_domain_interval(-1.0, 1.0);
      fill(c.alphas, Reals{0.1});
      fill(c.grid_m, std::size_t{1999});
      break;
    case ExperimentKind::custom:
      fill(c.n, std::size_t{1});
      fill(c.theta, ThetaSpec{});
      if (*c.n == 1)
        fill_domain_interval(-1.0, 1.0);
      else
        fill_domain_ball(1.0);
      fill(c.problem, std::string("exit-time"));
      fill(c.estimators, Strings{"mc"});
      fill(c.N, std::size_t{10});
      fill(c.M, std::size_t{100});
      fill(c.dt, paper ? 1e-4 : 1e-3);
      fill(c.grid_m, std::size_t{1999});
      fill(c.deltas, Reals{0.25});
      break;
  }
  if (!c.initial_points) c.initial_points = std::vector<std::vector<double>>{std::vector<double>(*c.n, 0.0)};
  return c;
}

void validate_config(const ExperimentConfig& c) {
  const std::size_t n = need(c.n, "n");
  if (n == 0) throw ConfigError("config: n must be >= 1");
  if (!(need(c.eps, "eps") > 0.0)) throw ConfigError("config: eps must be > 0");
  if (c.theta && !c.theta->tridiag && c.theta->value < 0.0) throw ConfigError("config: theta must be >= 0");
  if (c.R && c.interval) throw ConfigError("config: give either 'R' or 'interval', not both");
  if (c.R && !(*c.R > 0.0)) throw ConfigError("config: R must be > 0");
  if (c.interval) {
    if (c.interval->size() != 2 || !((*c.interval)[0] < (*c.interval)[1]))
      throw ConfigError("config: 'interval' must be [a, b] with a < b");
    if (n != 1) throw ConfigError("config: an interval domain needs n = 1");
  }
  if (c.dt && !(*c.dt > 0.0)) throw ConfigError("config: dt must be > 0");
  if (c.N && *c.N < 1) throw ConfigError("config: N must be >= 1");
  if (c.M && *c.M < 1) throw ConfigError("config: M must be >= 1");
  if (c.max_steps && *c.max_steps < 1) throw ConfigError("config: max_steps must be >= 1");
  if (c.alphas)
    for (double a : *c.alphas)
      if (!(a > 0.0)) throw ConfigError("config: every alpha must be > 0");
  if (c.deltas)
    for (double d : *c.deltas)
      if (!(d >= 0.0)) throw ConfigError("config: every delta must be >= 0");
  if (c.c && !(*c.c >= 0.0)) throw ConfigError("config: c must be >= 0");
  if (c.grid_m && *c.grid_m < 3) throw ConfigError("config: grid_m must be >= 3");
  if (c.budget_factor && !(*c.budget_factor > 0.0)) throw ConfigError("config: budget_factor must be > 0");
  if (c.horizon && !(*c.horizon > 0.0)) throw ConfigError("config: horizon must be > 0");
  if (c.radii)
    for (double r : *c.radii)
      if (!(r >= 0.0)) throw ConfigError("config: radii must be >= 0");
  if (c.initial_points)
    for (const auto& p : *c.initial_points)
      if (p.size() != n) throw ConfigError(fmt::format("config: initial point has {} components, n = {}", p.size(), n));

  const bool one_d_only = c.experiment == ExperimentKind::alpha_sweep || c.experiment == ExperimentKind::cov_limit ||
                          c.experiment == ExperimentKind::pde_check;
  if (one_d_only && n != 1)
    throw ConfigError(fmt::format("config: {} uses the 1-D pde-control and needs n = 1 (got n = {})",
                                  to_string(c.experiment), n));
  if ((c.experiment == ExperimentKind::fig1 || c.experiment == ExperimentKind::fig2) && !c.R)
    throw ConfigError("config: " + to_string(c.experiment) + " needs a ball domain 'R'");
  if (c.experiment == ExperimentKind::fig1 && c.theta && (c.theta->tridiag || c.theta->value != 0.0))
    throw ConfigError("config: fig1 needs Brownian motion (theta = 0)");
  if ((c.experiment == ExperimentKind::pathology || c.experiment == ExperimentKind::pde_check) && c.theta &&
      (c.theta->tridiag || c.theta->value != 0.0))
    throw ConfigError("config: " + to_string(c.experiment) + " needs Brownian motion (theta = 0)");
  if (c.experiment == ExperimentKind::pathology && c.interval &&
      std::abs((*c.interval)[0] + (*c.interval)[1]) > 1e-12)
    throw ConfigError("config: pathology needs a symmetric interval (-R, R)");

  if (c.estimators) {
    std::set<std::string> allowed;
    switch (c.experiment) {
      case ExperimentKind::fig1: allowed = {"mc", "cov", "pcov"}; break;
      case ExperimentKind::fig2: allowed = {"mc", "cov"}; break;
      case ExperimentKind::pathology: allowed = {"mc", "ais-paper-literal", "ais-sigma-loggrad"}; break;
      case ExperimentKind::alpha_sweep:
      case ExperimentKind::cov_limit: allowed = {"mc", "cov", "risk"}; break;
      case ExperimentKind::pde_check: allowed = {}; break;
      case ExperimentKind::custom: allowed = {"mc", "cov", "pcov", "is", "risk"}; break;
    }
    for (const auto& e : *c.estimators)
      if (!allowed.contains(e))
        throw ConfigError(fmt::format("config: estimator '{}' is not available for {}", e, to_string(c.experiment)));
  }

  if (c.experiment == ExperimentKind::custom) {
    const auto& est = need(c.estimators, "estimators");
    const std::string problem = c.problem.value_or("exit-time");
    if (problem != "exit-time" && problem != "exit-probability")
      throw ConfigError("config: problem must be \"exit-time\" or \"exit-probability\"");
    if (c.exit_side && *c.exit_side != "left" && *c.exit_side != "right" && *c.exit_side != "any")
      throw ConfigError("config: exit_side must be left, right or any");
    if (c.exit_side && *c.exit_side != "any" && !c.interval)
      throw ConfigError("config: exit_side left/right needs an interval domain");
    if (has(est, "risk")) {
      if (n != 1)
        throw ConfigError(fmt::format("config: estimator 'risk' uses a 1-D pde-control and needs n = 1 (got n = {})", n));
      if (!c.alphas || c.alphas->empty()) throw ConfigError("config: estimator 'risk' needs 'alphas'");
    }
    if ((has(est, "risk") || has(est, "cov") || has(est, "pcov")) && c.horizon)
      throw ConfigError("config: cov, pcov and risk need a problem without horizon");
    if ((has(est, "cov") || has(est, "pcov")) && n > 1 && (!is_brownian(c) || problem != "exit-time"))
      throw ConfigError("config: in n > 1, cov/pcov use the Brownian ball MFET and need theta = 0 and exit-time");
    if (has(est, "is") && (!c.controls || c.controls->empty()))
      throw ConfigError("config: estimator 'is' needs 'controls'");
  }
}

ExperimentResult run_experiment(const ExperimentConfig& raw, unsigned workers) {
  const auto config = apply_preset(raw);
  validate_config(config);
  switch (config.experiment) {
    case ExperimentKind::fig1: return run_fig1(config, workers);
    case ExperimentKind::fig2: return run_fig2(config, workers);
    case ExperimentKind::pathology: return run_pathology(config, workers);
    case ExperimentKind::alpha_sweep: return run_alpha_sweep(config, workers);
    case ExperimentKind::cov_limit: return run_cov_limit(config, workers);
    case ExperimentKind::pde_check: return run_pde_check(config, workers);
    case ExperimentKind::custom: return run_custom(config, workers);
  }
  throw ConfigError("unknown experiment");
}

ExperimentResult run_fig1(const ExperimentConfig& raw, unsigned workers) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const std::size_t n = *c.n;
  const double R = *c.R, eps = *c.eps;
  const auto& estimators = *c.estimators;
  const auto model = SdeModel::brownian(n, eps);
  const auto problem = exit_time_problem(Domain::ball(R));
  const auto phi = CovariateField::ball_mfet(R, n, eps);

  std::vector<CovariateField> fields;
  std::vector<std::string> kinds;
  if (has(estimators, "cov")) {
    fields.push_back(phi);
    kinds.push_back("cov");
  }
  if (has(estimators, "pcov"))
    for (double d : *c.deltas) {
      fields.push_back(perturb_covariate(phi, d));
      kinds.push_back(fmt::format("pcov-{:g}", d));
    }

  std::vector<Vector> points;
  for (double r : *c.radii) points.push_back(point_on_axis(n, r));
  auto settings = base_settings(c, points.front(), workers);
  settings.max_steps = step_budget(c, model, problem, points, workers);

  ExperimentResult out;
  out.experiment = "fig1";
  out.summary = Table(with_report_columns({"radius", "estimator", "exact"}));
  out.runs = runs_table("radius");
  out.plot = Plot{fmt::format("Mean first exit time, n={}, R={:g}, eps={:g}", n, R, eps), "initial radius |x0|",
                  "MFET estimate (95% CI)", false, false, {}};
  std::vector<PlotSeries> series;
  for (const auto& k : std::vector<std::string>{"mc"})
    if (has(estimators, k)) series.push_back(series_of(k));
  for (const auto& k : kinds) series.push_back(series_of(k));
  PlotSeries exact{"exact", {}, {}, {}, {}, false};

  json walls = json::array();
  for (std::size_t p = 0; p < points.size(); ++p) {
    const double r = (*c.radii)[p];
    settings.x0 = points[p];
    const double reference = analytic_mfet(c, points[p]);
    const auto reports = shared_path_estimates(problem, model, fields, kinds, settings);
    std::size_t s = 0;
    for (const auto& rep : reports) {
      if (rep.kind == "mc" && !has(estimators, "mc")) continue;
      out.summary.add(join({r, rep.kind, reference}, rep));
      add_runs(out.runs, r, rep);
      push_point(series[s++], r, rep);
    }
    exact.x.push_back(r);
    exact.y.push_back(reference);
    walls.push_back({{"radius", r}, {"seconds", reports.front().wall_time}});
  }
  series.push_back(exact);
  out.plot.series = std::move(series);
  out.details["radii"] = *c.radii;
  out.details["initial_direction"] = "first coordinate axis";
  out.details["max_steps"] = settings.max_steps;
  out.details["wall_time"] = walls;
  out.details["notes"] = json::array({"MC, CoV and PCoV share one set of uncontrolled paths per radius"});
  return out;
}

ExperimentResult run_fig2(const ExperimentConfig& raw, unsigned workers) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const std::size_t n = *c.n;
  const double R = *c.R, eps = *c.eps;
  const auto model = build_model(c);
  const auto problem = exit_time_problem(Domain::ball(R));
  const auto phi = CovariateField::ball_mfet(R, n, eps);

  std::vector<Vector> points, directions;
  for (std::size_t k = 0; k < c.radii->size(); ++k) {
    GaussianSource g({*c.seed, kAuxRun, k});
    Vector d(static_cast<Eigen::Index>(n));
    g.fill(d);
    d.normalize();
    directions.push_back(d);
    points.push_back((*c.radii)[k] * d);
  }
  auto settings = base_settings(c, points.front(), workers);
  settings.max_steps = step_budget(c, model, problem, points, workers);

  ExperimentResult out;
  out.experiment = "fig2";
  out.summary = Table(with_report_columns({"radius", "estimator"}));
  out.runs = runs_table("radius");
  out.plot = Plot{fmt::format("OU mean first exit time, n={}, R={:g}, eps={:g}", n, R, eps), "initial radius |x0|",
                  "MFET estimate (95% CI)", false, false, {}};
  PlotSeries mc_series = series_of("mc"), cov_series = series_of("cov");

  json walls = json::array();
  double mc_total = 0.0, cov_total = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const double r = (*c.radii)[p];
    settings.x0 = points[p];
    if (has(*c.estimators, "mc")) {
      const auto rep = mc_estimate(problem, model, settings);
      out.summary.add(join({r, rep.kind}, rep));
      add_runs(out.runs, r, rep);
      push_point(mc_series, r, rep);
      mc_total += rep.wall_time;
      walls.push_back({{"radius", r}, {"estimator", "mc"}, {"seconds", rep.wall_time}});
    }
    if (has(*c.estimators, "cov")) {
      const auto rep = cov_estimate(problem, model, phi, settings);
      out.summary.add(join({r, rep.kind}, rep));
      add_runs(out.runs, r, rep);
      push_point(cov_series, r, rep);
      cov_total += rep.wall_time;
      walls.push_back({{"radius", r}, {"estimator", "cov"}, {"seconds", rep.wall_time}});
    }
  }
  if (!mc_series.x.empty()) out.plot.series.push_back(mc_series);
  if (!cov_series.x.empty()) out.plot.series.push_back(cov_series);

  json dirs = json::array();
  for (const auto& d : directions) dirs.push_back(std::vector<double>(d.data(), d.data() + d.size()));
  out.details["radii"] = *c.radii;
  out.details["directions"] = dirs;
  out.details["direction_rule"] = "standard normal vector from stream (seed, 4294967295, radius index), normalized";
  out.details["max_steps"] = settings.max_steps;
  out.details["wall_time"] = walls;
  out.details["wall_time_total"] = {{"mc", mc_total}, {"cov", cov_total}};
  out.details["notes"] = json::array({"covariate is the Brownian-motion MFET of the ball (suboptimal for OU)"});
  return out;
}

ExperimentResult run_pathology(const ExperimentConfig& raw, unsigned workers) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const std::size_t n = *c.n;
  const double eps = *c.eps;
  const double radius = c.interval ? (*c.interval)[1] : *c.R;
  const auto model = SdeModel::brownian(n, eps);
  const auto problem = exit_time_problem(build_domain(c));
  const auto& p0 = c.initial_points->front();
  const Vector x0 = Eigen::Map<const Vector>(p0.data(), static_cast<Eigen::Index>(p0.size()));

  const double mean_exit = analytic_mfet(c, x0);
  const auto mean_steps = std::ceil(mean_exit / *c.dt);
  auto settings = base_settings(c, x0, workers);
  settings.max_steps = c.max_steps ? *c.max_steps
                                   : static_cast<std::size_t>(std::ceil(*c.budget_factor * std::max(1.0, mean_steps)));

  ExperimentResult out;
  out.experiment = "pathology";
  out.summary = Table(with_report_columns({"estimator", "budget_steps"}));
  out.runs = runs_table("budget_steps");
  out.plot = Plot{"Fraction of paths without exit within the step budget", "dynamics (0 = uncontrolled)",
                  "non-exit fraction", false, false, {}};
  PlotSeries frac = series_of("non_exit_fraction");

  json walls = json::array();
  double index = 0.0;
  for (const auto& name : *c.estimators) {
    ControlPolicy policy = ControlPolicy::none();
    if (name == "ais-paper-literal")
      policy = ControlPolicy::singular_log_mfet(radius, eps, SingularDriftMode::paper_literal);
    else if (name == "ais-sigma-loggrad")
      policy = ControlPolicy::singular_log_mfet(radius, eps, SingularDriftMode::sigma_times_loggrad);
    const auto batch = simulate_paths(model, problem, policy, {}, settings);
    const auto rep = make_report(name, batch, [](const TrajectoryOutcome& o) { return o.S; });
    const auto budget = static_cast<std::int64_t>(settings.max_steps);
    out.summary.add(join({name, budget}, rep));
    add_runs(out.runs, budget, rep);
    frac.x.push_back(index++);
    frac.y.push_back(rep.non_exit_fraction);
    walls.push_back({{"estimator", name}, {"seconds", rep.wall_time}});
  }
  out.plot.series.push_back(frac);
  out.details["mean_exit_time"] = mean_exit;
  out.details["budget_steps"] = settings.max_steps;
  out.details["wall_time"] = walls;
  out.details["notes"] = json::array({"estimate = mean sampled cost S under the simulated dynamics (no reweighting)"});
  return out;
}

namespace {

struct OneDimSetup {
  SdeModel model;
  PathProblem problem;
  Grid1D grid;
  double sigma;
  double x0;
  PdeField phi;
};

OneDimSetup one_dim_setup(const ExperimentConfig& c) {
  const auto [a, b] = interval_of(c);
  auto model = build_model(c);
  const Grid1D grid(a, b, *c.grid_m);
  auto phi = solve_linear_bvp(model, [](double) { return 1.0; }, 0.0, 0.0, grid);
  const double x0 = c.initial_points->front().front();
  return {model, exit_time_problem(Domain::interval(a, b)), grid, model.sigma()(0, 0), x0, std::move(phi)};
}

double interior_max_abs_diff(const std::vector<double>& u, const std::vector<double>& v) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < u.size(); ++i) worst = std::max(worst, std::abs(u[i] - v[i]));
  return worst;
}

PdeField value_for(const OneDimSetup& s, double alpha) {
  const auto h = solve_mgf_bvp(s.model, [](double) { return 1.0; }, 0.0, 0.0, alpha, s.grid);
  return value_from_mgf(h, alpha);
}

}  // namespace

ExperimentResult run_alpha_sweep(const ExperimentConfig& raw, unsigned workers) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const auto s = one_dim_setup(c);
  const Vector x0 = Vector::Constant(1, s.x0);
  auto settings = base_settings(c, x0, workers);
  settings.max_steps = step_budget(c, s.model, s.problem, {x0}, workers);

  ExperimentResult out;
  out.experiment = "alpha-sweep";
  out.summary =
      Table(with_report_columns({"alpha", "estimator", "reference", "mgf_gamma", "max_abs_control", "tau_std_error"}));
  out.runs = runs_table("alpha");
  out.plot = Plot{"Risk-sensitive estimate against alpha", "alpha", "gamma estimate (95% CI)", true, false, {}};
  PlotSeries est = series_of("risk"), ref{"reference", {}, {}, {}, {}, false};

  json walls = json::array();
  const double phi0 = s.phi.value(s.x0);
  if (has(*c.estimators, "mc")) {
    const auto rep = mc_estimate(s.problem, s.model, settings);
    out.summary.add(join({0.0, rep.kind, phi0, kNaN, 0.0, rep.tau_std_error}, rep));
    add_runs(out.runs, 0.0, rep);
    walls.push_back({{"alpha", 0.0}, {"estimator", "mc"}, {"seconds", rep.wall_time}});
  }
  if (has(*c.estimators, "cov")) {
    const auto rep = cov_estimate(s.problem, s.model, CovariateField::from_pde(s.phi), settings);
    out.summary.add(join({0.0, rep.kind, phi0, kNaN, 0.0, rep.tau_std_error}, rep));
    add_runs(out.runs, 0.0, rep);
    walls.push_back({{"alpha", 0.0}, {"estimator", "cov"}, {"seconds", rep.wall_time}});
  }
  if (has(*c.estimators, "risk")) {
    for (double alpha : *c.alphas) {
      const auto v = value_for(s, alpha);
      const auto u = control_from_value(v, alpha, s.sigma);
      double umax = 0.0;
      for (double x : u.values()) umax = std::max(umax, std::abs(x));
      const auto rep = risk_sensitive_gamma(s.problem, s.model, v, RiskParams(alpha, *c.c), settings);
      out.summary.add(join({alpha, rep.kind, v.value(s.x0), *rep.mgf_gamma, umax, rep.tau_std_error}, rep));
      add_runs(out.runs, alpha, rep);
      push_point(est, alpha, rep);
      ref.x.push_back(alpha);
      ref.y.push_back(v.value(s.x0));
      walls.push_back({{"alpha", alpha}, {"estimator", "risk"}, {"seconds", rep.wall_time}});
    }
    out.plot.series = {est, ref};
  }
  out.details["alphas"] = *c.alphas;
  out.details["max_steps"] = settings.max_steps;
  out.details["wall_time"] = walls;
  out.details["notes"] = json::array({"reference = finite-difference value function at x0 (alpha = 0: linear BVP)",
                                      "all alphas use the same seed (common random numbers)"});
  return out;
}

ExperimentResult run_cov_limit(const ExperimentConfig& raw, unsigned workers) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const auto s = one_dim_setup(c);
  const Vector x0 = Vector::Constant(1, s.x0);
  auto settings = base_settings(c, x0, workers);
  settings.max_steps = step_budget(c, s.model, s.problem, {x0}, workers);

  ExperimentResult out;
  out.experiment = "cov-limit";
  out.summary = Table(with_report_columns({"alpha", "estimator", "per_path_variance", "variance_ratio",
                                           "control_error", "value_error", "martingale_mean", "martingale_se"}));
  out.runs = runs_table("alpha");
  out.plot = Plot{"Scaled risk-sensitive control against the control-variate gradient", "alpha",
                  "max |u*/alpha + sigma phi'|", true, true, {}};
  PlotSeries err = series_of("control_error");

  const auto field = CovariateField::from_pde(s.phi);
  const auto batch = simulate_paths(s.model, s.problem, ControlPolicy::none(), std::span(&field, 1), settings);
  const auto mc = make_report("mc", batch, [](const TrajectoryOutcome& o) { return o.S; });
  const auto cov = make_report("cov", batch, [](const TrajectoryOutcome& o) { return o.S - o.M(); });
  double msum = 0.0, msq = 0.0;
  for (const auto& o : batch.outcomes) {
    msum += o.M();
    msq += o.M() * o.M();
  }
  const double count = static_cast<double>(batch.outcomes.size());
  const double mmean = msum / count;
  const double mse = std::sqrt(std::max(0.0, msq / count - mmean * mmean) / count);
  const double mc_var = mc.per_path_std * mc.per_path_std;
  auto ratio = [mc_var](double v) { return mc_var > 0.0 ? v / mc_var : kNaN; };

  if (has(*c.estimators, "mc")) {
    out.summary.add(join({0.0, "mc", mc_var, 1.0, kNaN, kNaN, kNaN, kNaN}, mc));
    add_runs(out.runs, 0.0, mc);
  }
  if (has(*c.estimators, "cov")) {
    const double v = cov.per_path_std * cov.per_path_std;
    out.summary.add(join({0.0, "cov", v, ratio(v), kNaN, kNaN, mmean, mse}, cov));
    add_runs(out.runs, 0.0, cov);
  }

  const auto dphi = s.phi.derivatives();
  std::vector<double> target(dphi.size());
  for (std::size_t i = 0; i < dphi.size(); ++i) target[i] = -s.sigma * dphi[i];
  json walls = json::array({{{"estimator", "mc+cov"}, {"seconds", batch.wall_time}}});
  for (double alpha : *c.alphas) {
    const auto v = value_for(s, alpha);
    auto scaled = control_from_value(v, alpha, s.sigma).values();
    for (double& u : scaled) u /= alpha;
    const double control_error = interior_max_abs_diff(scaled, target);
    const double value_error = interior_max_abs_diff(v.values(), s.phi.values());
    err.x.push_back(alpha);
    err.y.push_back(control_error);
    if (has(*c.estimators, "risk")) {
      const auto rep = risk_sensitive_gamma(s.problem, s.model, v, RiskParams(alpha, *c.c), settings);
      const double var = rep.per_path_std * rep.per_path_std;
      out.summary.add(join({alpha, "risk", var, ratio(var), control_error, value_error, kNaN, kNaN}, rep));
      add_runs(out.runs, alpha, rep);
      walls.push_back({{"alpha", alpha}, {"estimator", "risk"}, {"seconds", rep.wall_time}});
    } else {
      EstimatorReport empty;
      empty.per_run_estimates = {kNaN};
      empty.summary = RunSummary{kNaN, kNaN, kNaN, kNaN, kNaN, false, true};
      out.summary.add(join({alpha, "pde", kNaN, kNaN, control_error, value_error, kNaN, kNaN}, empty));
    }
  }
  out.plot.series.push_back(err);
  out.details["alphas"] = *c.alphas;
  out.details["max_steps"] = settings.max_steps;
  out.details["wall_time"] = walls;
  out.details["notes"] = json::array({"control_error and value_error are maxima over interior grid nodes",
                                      "variance_ratio = per-path variance / MC per-path variance"});
  return out;
}

ExperimentResult run_pde_check(const ExperimentConfig& raw, unsigned) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const auto [a, b] = interval_of(c);
  const double eps = *c.eps, centre = 0.5 * (a + b), half = 0.5 * (b - a);
  const double alpha = c.alphas->front();
  const std::size_t m = *c.grid_m;
  const auto model = SdeModel::brownian(1, eps);
  const ScalarFn one = [](double) { return 1.0; };
  const Grid1D grid(a, b, m);

  ExperimentResult out;
  out.experiment = "pde-check";
  out.summary = Table({"check", "measured", "threshold", "passed"});
  out.runs = Table({"m", "h", "mgf_max_error"});
  auto add = [&out](const std::string& name, double measured, double threshold, bool passed) {
    out.summary.add({name, measured, threshold, static_cast<std::int64_t>(passed ? 1 : 0)});
  };

  const auto mfet = [&](double x) { return (x - a) * (b - x) / (2.0 * eps); };
  const auto mgf = [&](double x) { return analytic::mgf_exit_bm_1d(x - centre, half, eps, alpha); };

  const auto phi = solve_linear_bvp(model, one, 0.0, 0.0, grid);
  const double e_lin = max_error(phi, mfet);
  add("linear_bvp_vs_mfet", e_lin, 1e-6, e_lin <= 1e-6);

  const auto h = solve_mgf_bvp(model, one, 0.0, 0.0, alpha, grid);
  const double e_mgf = max_error(h, mgf);
  add("mgf_bvp_vs_cosh", e_mgf, 1e-6, e_mgf <= 1e-6);

  PlotSeries conv = series_of("max error vs cosh oracle");
  std::vector<double> errors;
  for (std::size_t mm : {24u, 49u, 99u, 199u, 399u}) {
    const Grid1D g(a, b, mm);
    const double e = max_error(solve_mgf_bvp(model, one, 0.0, 0.0, alpha, g), mgf);
    errors.push_back(e);
    out.runs.add({static_cast<std::int64_t>(mm), g.h(), e});
    conv.x.push_back(g.h());
    conv.y.push_back(e);
  }
  double worst_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < errors.size(); ++k) worst_ratio = std::min(worst_ratio, errors[k - 1] / errors[k]);
  add("grid_halving_ratio_min", worst_ratio, 3.5, worst_ratio >= 3.5);

  double h_min = std::numeric_limits<double>::infinity(), h_max = -h_min;
  for (double v : h.values()) {
    h_min = std::min(h_min, v);
    h_max = std::max(h_max, v);
  }
  add("mgf_min", h_min, 0.0, h_min > 0.0);
  add("mgf_max", h_max, 1.0, h_max <= 1.0);

  const auto v = value_from_mgf(h, alpha);
  const double residual = hjb_residual(v, model, one, alpha);
  add("hjb_residual", residual, 1e-3, residual <= 1e-3);
  const double v_exact = analytic::value_1d(0.0, half, eps, alpha);
  const double e_v = std::abs(v.value(centre) - v_exact) / std::abs(v_exact);
  add("value_at_centre_relative_error", e_v, 1e-6, e_v <= 1e-6);

  const double long_t = 20.0 * mfet(centre);
  const auto psi = solve_parabolic_fk(model, long_t, 2000, Grid1D(a, b, 199));
  double psi_dev = 0.0;
  for (double p : psi.at_level(0).values()) psi_dev = std::max(psi_dev, std::abs(p - 1.0));
  add("parabolic_long_horizon", psi_dev, 1e-3, psi_dev <= 1e-3);

  out.plot = Plot{"MGF finite-difference error against grid spacing", "h", "max nodal error", true, true, {conv}};
  out.details["alpha"] = alpha;
  out.details["grid_m"] = m;
  return out;
}

ExperimentResult run_custom(const ExperimentConfig& raw, unsigned workers) {
  const auto c = apply_preset(raw);
  validate_config(c);
  const std::size_t n = *c.n;
  const auto model = build_model(c);
  const auto domain = build_domain(c);
  const bool probability = *c.problem == "exit-probability";
  std::optional<ExitLabel> side;
  const std::string side_name = c.exit_side.value_or("any");
  if (side_name == "left") side = ExitLabel::left;
  if (side_name == "right") side = ExitLabel::right;
  const PathProblem problem = probability ? exit_probability_problem(domain, side, c.horizon)
                                          : PathProblem(domain, RunningCost::one(), TerminalCost::zero(), c.horizon, n);

  std::vector<Vector> points;
  for (const auto& p : *c.initial_points)
    points.emplace_back(Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size())));
  auto settings = base_settings(c, points.front(), workers);
  settings.max_steps = step_budget(c, model, problem, points, workers);

  const auto& est = *c.estimators;
  std::optional<CovariateField> phi;
  std::optional<Grid1D> grid;
  const ScalarFn running = [probability](double) { return probability ? 0.0 : 1.0; };
  double g_left = 0.0, g_right = 0.0;
  if (probability) {
    g_left = side_name != "right" ? 1.0 : 0.0;
    g_right = side_name != "left" ? 1.0 : 0.0;
  }
  if (n == 1) {
    const auto [a, b] = interval_of(c);
    grid.emplace(a, b, *c.grid_m);
  }
  if (has(est, "cov") || has(est, "pcov")) {
    if (n == 1)
      phi = CovariateField::from_pde(solve_linear_bvp(model, running, g_left, g_right, *grid));
    else
      phi = CovariateField::ball_mfet(*c.R, n, *c.eps);
  }

  ExperimentResult out;
  out.experiment = "custom";
  out.summary = Table(with_report_columns({"point", "x0", "estimator"}));
  out.runs = runs_table("point");
  out.plot = Plot{"Estimates per initial point", "initial point index", "estimate (95% CI)", false, false, {}};
  std::map<std::string, PlotSeries> series;
  json walls = json::array();

  for (std::size_t p = 0; p < points.size(); ++p) {
    settings.x0 = points[p];
    std::string label;
    for (Eigen::Index i = 0; i < points[p].size(); ++i) label += fmt::format("{}{:g}", i ? " " : "", points[p](i));
    std::vector<EstimatorReport> reports;
    if (has(est, "mc")) reports.push_back(mc_estimate(problem, model, settings));
    if (has(est, "cov")) reports.push_back(cov_estimate(problem, model, *phi, settings));
    if (has(est, "pcov"))
      for (double d : *c.deltas) {
        auto r = cov_estimate(problem, model, perturb_covariate(*phi, d), settings);
        r.kind = fmt::format("pcov-{:g}", d);
        reports.push_back(std::move(r));
      }
    if (has(est, "is"))
      for (const auto& control : constant_controls(*c.controls, n)) {
        auto r = is_estimate(problem, model, control.policy, settings);
        r.kind = "is-" + control.name;
        reports.push_back(std::move(r));
      }
    if (has(est, "risk"))
      for (double alpha : *c.alphas) {
        const auto h = solve_mgf_bvp(model, running, g_left, g_right, alpha, *grid);
        auto r = risk_sensitive_gamma(problem, model, value_from_mgf(h, alpha), RiskParams(alpha, *c.c), settings);
        r.kind = fmt::format("risk-{:g}", alpha);
        reports.push_back(std::move(r));
      }
    for (const auto& r : reports) {
      const auto idx = static_cast<std::int64_t>(p);
      out.summary.add(join({idx, label, r.kind}, r));
      add_runs(out.runs, idx, r);
      auto [it, inserted] = series.try_emplace(r.kind, series_of(r.kind));
      push_point(it->second, static_cast<double>(p), r);
      walls.push_back({{"point", p}, {"estimator", r.kind}, {"seconds", r.wall_time}});
    }
  }
  for (auto& [name, s] : series) out.plot.series.push_back(std::move(s));
  out.details["max_steps"] = settings.max_steps;
  out.details["wall_time"] = walls;
  return out;
}

void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, unsigned workers,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "summary.csv", result.summary.to_csv());
  write_text_file(dir / "runs.csv", result.runs.to_csv());
  write_text_file(dir / "plot.svg", render_svg(result.plot));
  json manifest;
  manifest["experiment"] = result.experiment;
  manifest["version"] = kVersion;
  manifest["seed"] = config.seed.value_or(1);
  manifest["workers"] = workers;
  manifest["created"] = utc_timestamp();
  manifest["config"] = config_to_json(config);
  manifest["files"] = {"summary.csv", "runs.csv", "plot.svg"};
  for (const auto& [key, value] : result.details.items()) manifest[key] = value;
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace exitlab
