#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exitlab/models.hpp"
#include "exitlab/pde.hpp"
#include "exitlab/trajectory.hpp"

namespace exitlab {

/// How a batch of M runs of N trajectories each is simulated.
struct SimulationSettings {
  Vector x0;
  double dt = 1e-3;
  std::size_t paths_per_run = 10;  // N
  std::size_t runs = 100;          // M
  std::uint64_t seed = 1;
  std::size_t max_steps = 1'000'000;
  unsigned workers = 1;
};

/// max_steps = factor x (mean exit time / dt), rounded up.
std::size_t default_max_steps(double mean_exit_time, double dt, double factor = 50.0);

/// Outcomes in deterministic (run, trajectory) order: index run * N + traj.
struct PathBatch {
  std::vector<TrajectoryOutcome> outcomes;
  std::size_t paths_per_run = 0;
  std::size_t runs = 0;
  double wall_time = 0.0;

  const TrajectoryOutcome& at(std::size_t run, std::size_t traj) const {
    return outcomes[run * paths_per_run + traj];
  }
};

/// Simulates every (run, trajectory) pair, possibly on several worker
/// threads. Trajectory (r, i) always uses RngStream{seed, r, i}, so the
/// outcomes do not depend on the worker count.
PathBatch simulate_paths(const SdeModel& model, const PathProblem& problem, const ControlPolicy& policy,
                         std::span<const CovariateField> covariates, const SimulationSettings& settings);

struct RunSummary {
  double mean = 0.0;
  double sample_std = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// sample_std / |mean|; NaN when mean == 0 (see relative_error_defined).
  double relative_error = 0.0;
  bool relative_error_defined = true;
  bool single_run = false;
};

/// Mean, sample standard deviation and the normal-approximation 95% interval
/// mean +- 1.96 s / sqrt(M). Intended for M >= 30; M = 1 gives s = 0.
RunSummary summarize(std::span<const double> per_run_estimates);

struct EstimatorReport {
  std::string kind;
  std::vector<double> per_run_estimates;
  RunSummary summary;

  /// Statistics of the per-trajectory estimates pooled over all runs.
  double per_path_mean = 0.0;
  double per_path_std = 0.0;

  double mean_tau = 0.0;
  /// Standard error of mean_tau over all trajectories.
  double tau_std_error = 0.0;
  double mean_steps = 0.0;
  std::size_t total_steps = 0;
  /// Fraction of trajectories stopped by the step budget.
  double non_exit_fraction = 0.0;
  double wall_time = 0.0;

  /// Importance weights exp(-log L), when a change of measure was used.
  std::optional<double> weight_max;
  std::optional<double> effective_sample_size;
  std::optional<double> max_abs_log_weight;

  /// Risk-sensitive estimator: average of exp(-alpha S - log L) and its CGF.
  std::optional<double> mgf_estimate;
  std::optional<double> mgf_gamma;

  double mean() const { return summary.mean; }
  double sample_std() const { return summary.sample_std; }
};

/// Builds a report from per-path values value(outcome).
EstimatorReport make_report(std::string kind, const PathBatch& batch,
                            const std::function<double(const TrajectoryOutcome&)>& value);

/// Plain Monte Carlo: per-run mean of S over uncontrolled paths.
EstimatorReport mc_estimate(const PathProblem& problem, const SdeModel& model,
                            const SimulationSettings& settings);

/// Importance sampling: per-path S exp(-log L) under the controlled dynamics.
EstimatorReport is_estimate(const PathProblem& problem, const SdeModel& model, const ControlPolicy& policy,
                            const SimulationSettings& settings);

/// Control variate: per-path S - M on uncontrolled paths.
EstimatorReport cov_estimate(const PathProblem& problem, const SdeModel& model,
                             const CovariateField& covariate, const SimulationSettings& settings);

/// MC plus one CoV report per covariate, all from a single set of uncontrolled
/// paths. Every report equals what mc_estimate / cov_estimate would return for
/// the same settings, except for wall_time, which is the shared pass time.
std::vector<EstimatorReport> shared_path_estimates(const PathProblem& problem, const SdeModel& model,
                                                   std::span<const CovariateField> covariates,
                                                   std::span<const std::string> covariate_kinds,
                                                   const SimulationSettings& settings);

/// -(1/alpha) log(mean_i exp(-alpha s_i)), evaluated with a max shift.
double cgf_naive(std::span<const double> samples, double alpha);

/// Standard error of cgf_naive by the delta method.
double cgf_naive_std_error(std::span<const double> samples, double alpha);

struct RiskParams {
  RiskParams(double alpha, double regularization = 0.0);
  double alpha;
  double regularization;
};

/// Risk-sensitive per-path estimate S + (1/alpha) log L under u* = -alpha sigma V',
/// with V the 1-D value field. Also reports the MGF form.
EstimatorReport risk_sensitive_gamma(const PathProblem& problem, const SdeModel& model,
                                     const PdeField& value, const RiskParams& risk,
                                     const SimulationSettings& settings);

struct GibbsRow {
  std::string control;
  double gamma_naive = 0.0;
  double gamma_std_error = 0.0;
  /// E_Q[S]
  double expected_cost = 0.0;
  /// KL(Q, P) estimated as E_Q[log L]
  double kl = 0.0;
  /// E_Q[S] + KL / alpha
  double bound = 0.0;
  double bound_std_error = 0.0;
  double slack = 0.0;
  double combined_std_error = 0.0;
};

struct NamedControl {
  std::string name;
  ControlPolicy policy;
};

/// Both sides of gamma(alpha) <= E_Q[S] + KL(Q,P)/alpha for each control.
/// gamma_naive comes from uncontrolled samples with the same settings.
std::vector<GibbsRow> gibbs_check(const PathProblem& problem, const SdeModel& model,
                                  std::span<const NamedControl> controls, double alpha,
                                  const SimulationSettings& settings);

/// Constant controls u = value for a 1-D model, named "u=<value>".
std::vector<NamedControl> constant_controls(std::span<const double> values, std::size_t dim);

}  // namespace exitlab
