#include "exitlab/estimators.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <fmt/format.h>

namespace exitlab {

namespace {

constexpr double kZ95 = 1.96;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void check_settings(const SimulationSettings& s, const SdeModel& model) {
  if (s.paths_per_run < 1 || s.runs < 1) throw std::invalid_argument("estimator: N and M must be >= 1");
  if (!(s.dt > 0.0)) throw std::invalid_argument("estimator: dt must be > 0");
  if (s.max_steps < 1) throw std::invalid_argument("estimator: max_steps must be >= 1");
  if (static_cast<std::size_t>(s.x0.size()) != model.dim())
    throw std::invalid_argument("estimator: initial state dimension does not match the model");
}

struct PooledStats {
  double mean = 0.0;
  double std = 0.0;
};

PooledStats pooled(std::span<const double> v) {
  PooledStats p;
  if (v.empty()) return p;
  p.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - p.mean) * (x - p.mean);
    p.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return p;
}

}  // namespace

std::size_t default_max_steps(double mean_exit_time, double dt, double factor) {
  if (!(dt > 0.0) || !(mean_exit_time >= 0.0) || !(factor > 0.0))
    throw std::invalid_argument("default_max_steps: invalid arguments");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(factor * mean_exit_time / dt)));
}

PathBatch simulate_paths(const SdeModel& model, const PathProblem& problem, const ControlPolicy& policy,
                         std::span<const CovariateField> covariates, const SimulationSettings& settings) {
  check_settings(settings, model);
  {
    const auto [lo, hi] = problem.domain.extent();
    policy.check_covers(lo, hi);
  }
  const auto start = std::chrono::steady_clock::now();
  PathBatch batch;
  batch.paths_per_run = settings.paths_per_run;
  batch.runs = settings.runs;
  const std::size_t total = settings.paths_per_run * settings.runs;
  batch.outcomes.resize(total);

  const TrajectorySettings traj{settings.dt, settings.max_steps};
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto work = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= total || failed.load()) return;
      const RngStream stream{settings.seed, k / settings.paths_per_run, k % settings.paths_per_run};
      try {
        batch.outcomes[k] = run_trajectory(model, problem, policy, covariates, settings.x0, traj, stream);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };

  const unsigned workers = std::max(1u, settings.workers);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  batch.wall_time = seconds_since(start);
  return batch;
}

RunSummary summarize(std::span<const double> v) {
  RunSummary s;
  if (v.empty()) throw std::invalid_argument("summarize: need at least one run");
  const auto p = pooled(v);
  s.mean = p.mean;
  s.sample_std = p.std;
  s.single_run = v.size() == 1;
  const double half = kZ95 * s.sample_std / std::sqrt(static_cast<double>(v.size()));
  s.ci_low = s.mean - half;
  s.ci_high = s.mean + half;
  if (s.mean == 0.0) {
    s.relative_error_defined = false;
    s.relative_error = std::numeric_limits<double>::quiet_NaN();
  } else {
    s.relative_error = s.sample_std / std::abs(s.mean);
  }
  return s;
}

EstimatorReport make_report(std::string kind, const PathBatch& batch,
                            const std::function<double(const TrajectoryOutcome&)>& value) {
  EstimatorReport r;
  r.kind = std::move(kind);
  r.wall_time = batch.wall_time;
  const std::size_t n = batch.paths_per_run;
  const std::size_t total = batch.outcomes.size();

  std::vector<double> per_path(total), taus(total);
  std::size_t budget_stops = 0;
  for (std::size_t k = 0; k < total; ++k) {
    const auto& o = batch.outcomes[k];
    per_path[k] = value(o);
    taus[k] = o.tau;
    r.total_steps += o.steps;
    if (o.reason == StopReason::budget) ++budget_stops;
  }
  r.per_run_estimates.resize(batch.runs);
  for (std::size_t run = 0; run < batch.runs; ++run) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += per_path[run * n + i];
    r.per_run_estimates[run] = sum / static_cast<double>(n);
  }
  r.summary = summarize(r.per_run_estimates);

  const auto pp = pooled(per_path);
  r.per_path_mean = pp.mean;
  r.per_path_std = pp.std;
  const auto tt = pooled(taus);
  r.mean_tau = tt.mean;
  r.tau_std_error = tt.std / std::sqrt(static_cast<double>(total));
  r.mean_steps = static_cast<double>(r.total_steps) / static_cast<double>(total);
  r.non_exit_fraction = static_cast<double>(budget_stops) / static_cast<double>(total);
  return r;
}

EstimatorReport mc_estimate(const PathProblem& problem, const SdeModel& model,
                            const SimulationSettings& settings) {
  const auto batch = simulate_paths(model, problem, ControlPolicy::none(), {}, settings);
  return make_report("mc", batch, [](const TrajectoryOutcome& o) { return o.S; });
}

EstimatorReport is_estimate(const PathProblem& problem, const SdeModel& model, const ControlPolicy& policy,
                            const SimulationSettings& settings) {
  const auto batch = simulate_paths(model, problem, policy, {}, settings);
  double max_abs = 0.0;
  for (const auto& o : batch.outcomes) max_abs = std::max(max_abs, std::abs(o.logL));
  // exp overflows past ~709.78
  for (const auto& o : batch.outcomes)
    if (-o.logL > 709.0)
      throw NumericalBlowup(fmt::format("is_estimate: importance weight overflow, max |log L| = {:.6g}", max_abs),
                            o.steps);

  auto report = make_report("is", batch, [](const TrajectoryOutcome& o) { return o.S * std::exp(-o.logL); });
  double sum = 0.0, sum_sq = 0.0, wmax = 0.0;
  for (const auto& o : batch.outcomes) {
    const double w = std::exp(-o.logL);
    sum += w;
    sum_sq += w * w;
    wmax = std::max(wmax, w);
  }
  report.weight_max = wmax;
  report.effective_sample_size = sum_sq > 0.0 ? sum * sum / sum_sq : 0.0;
  report.max_abs_log_weight = max_abs;
  return report;
}

EstimatorReport cov_estimate(const PathProblem& problem, const SdeModel& model,
                             const CovariateField& covariate, const SimulationSettings& settings) {
  const std::array<CovariateField, 1> fields{covariate};
  const auto batch = simulate_paths(model, problem, ControlPolicy::none(), fields, settings);
  return make_report("cov", batch, [](const TrajectoryOutcome& o) { return o.S - o.martingales[0]; });
}

std::vector<EstimatorReport> shared_path_estimates(const PathProblem& problem, const SdeModel& model,
                                                   std::span<const CovariateField> covariates,
                                                   std::span<const std::string> covariate_kinds,
                                                   const SimulationSettings& settings) {
  if (covariates.size() != covariate_kinds.size())
    throw std::invalid_argument("shared_path_estimates: one kind label per covariate required");
  const auto batch = simulate_paths(model, problem, ControlPolicy::none(), covariates, settings);
  std::vector<EstimatorReport> reports;
  reports.push_back(make_report("mc", batch, [](const TrajectoryOutcome& o) { return o.S; }));
  for (std::size_t j = 0; j < covariates.size(); ++j)
    reports.push_back(make_report(covariate_kinds[j], batch,
                                  [j](const TrajectoryOutcome& o) { return o.S - o.martingales[j]; }));
  return reports;
}

double cgf_naive(std::span<const double> samples, double alpha) {
  if (samples.empty()) throw std::invalid_argument("cgf_naive: empty sample set");
  if (!(alpha > 0.0)) throw std::invalid_argument("cgf_naive: alpha must be > 0");
  const double lo = *std::min_element(samples.begin(), samples.end());
  double sum = 0.0;
  for (double s : samples) sum += std::exp(-alpha * (s - lo));
  return lo - std::log(sum / static_cast<double>(samples.size())) / alpha;
}

double cgf_naive_std_error(std::span<const double> samples, double alpha) {
  if (samples.size() < 2) return 0.0;
  const double lo = *std::min_element(samples.begin(), samples.end());
  std::vector<double> w(samples.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-alpha * (samples[i] - lo));
  const auto p = pooled(w);
  return p.std / std::sqrt(static_cast<double>(w.size())) / (alpha * p.mean);
}

RiskParams::RiskParams(double a, double c) : alpha(a), regularization(c) {
  if (!(alpha > 0.0)) throw std::invalid_argument("RiskParams: alpha must be > 0");
  if (!(regularization >= 0.0)) throw std::invalid_argument("RiskParams: regularization must be >= 0");
}

EstimatorReport risk_sensitive_gamma(const PathProblem& problem, const SdeModel& model,
                                     const PdeField& value, const RiskParams& risk,
                                     const SimulationSettings& settings) {
  if (model.dim() != 1) throw std::invalid_argument("risk_sensitive_gamma: only 1-D problems are supported");
  const double alpha = risk.alpha;
  const auto policy = ControlPolicy::pde_control(value, alpha, model.sigma()(0, 0));
  const auto batch = simulate_paths(model, problem, policy, {}, settings);
  auto report = make_report("risk", batch, [alpha](const TrajectoryOutcome& o) { return o.S + o.logL / alpha; });

  // e^{-alpha gamma} = e^{-alpha S} dP/dQ*, dP/dQ* = exp(-log L); averaged with a shift.
  double shift = std::numeric_limits<double>::infinity();
  for (const auto& o : batch.outcomes) shift = std::min(shift, alpha * o.S + o.logL);
  double sum = 0.0;
  for (const auto& o : batch.outcomes) sum += std::exp(-(alpha * o.S + o.logL - shift));
  const double mean_shifted = sum / static_cast<double>(batch.outcomes.size());
  report.mgf_gamma = (shift - std::log(mean_shifted)) / alpha;
  report.mgf_estimate = std::exp(-alpha * *report.mgf_gamma);
  return report;
}

std::vector<GibbsRow> gibbs_check(const PathProblem& problem, const SdeModel& model,
                                  std::span<const NamedControl> controls, double alpha,
                                  const SimulationSettings& settings) {
  if (!(alpha > 0.0)) throw std::invalid_argument("gibbs_check: alpha must be > 0");
  const auto reference = simulate_paths(model, problem, ControlPolicy::none(), {}, settings);
  std::vector<double> costs;
  costs.reserve(reference.outcomes.size());
  for (const auto& o : reference.outcomes) costs.push_back(o.S);
  const double gamma = cgf_naive(costs, alpha);
  const double gamma_se = cgf_naive_std_error(costs, alpha);

  std::vector<GibbsRow> rows;
  for (const auto& control : controls) {
    const auto batch = simulate_paths(model, problem, control.policy, {}, settings);
    std::vector<double> s, l, b;
    for (const auto& o : batch.outcomes) {
      s.push_back(o.S);
      l.push_back(o.logL);
      b.push_back(o.S + o.logL / alpha);
    }
    GibbsRow row;
    row.control = control.name;
    row.gamma_naive = gamma;
    row.gamma_std_error = gamma_se;
    row.expected_cost = pooled(s).mean;
    row.kl = pooled(l).mean;
    const auto bound = pooled(b);
    row.bound = bound.mean;
    row.bound_std_error = bound.std / std::sqrt(static_cast<double>(b.size()));
    row.slack = row.bound - row.gamma_naive;
    row.combined_std_error = std::hypot(row.gamma_std_error, row.bound_std_error);
    rows.push_back(row);
  }
  return rows;
}

std::vector<NamedControl> constant_controls(std::span<const double> values, std::size_t dim) {
  std::vector<NamedControl> out;
  for (double v : values) out.push_back({fmt::format("u={:g}", v), ControlPolicy::constant(dim, v)});
  return out;
}

}  // namespace exitlab
