#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/core.h>

#include "exitlab/analytic.hpp"
#include "exitlab/estimators.hpp"
#include "exitlab/experiments.hpp"

using namespace exitlab;
using nlohmann::json;

namespace {

struct Outcome {
  bool passed = true;
  std::vector<std::string> notes;

  void require(bool ok, std::string note) {
    if (!ok) passed = false;
    notes.push_back(std::string(ok ? "ok: " : "FAILED: ") + std::move(note));
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

ExperimentConfig preset(const std::string& text) { return apply_preset(config_from_json(json::parse(text))); }

std::size_t row_of(const Table& t, double radius, const std::string& estimator) {
  for (std::size_t r : t.where("estimator", estimator))
    if (std::abs(t.number(r, "radius") - radius) < 1e-12) return r;
  throw std::runtime_error("missing row " + estimator);
}

SimulationSettings interval_settings(double dt, std::size_t n, std::size_t m, std::uint64_t seed) {
  SimulationSettings s;
  s.x0 = Vector::Zero(1);
  s.dt = dt;
  s.paths_per_run = n;
  s.runs = m;
  s.seed = seed;
  s.max_steps = 10'000'000;
  s.workers = worker_count();
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const double kEps = 0.05;
const SdeModel bm1 = SdeModel::brownian(1, kEps);
const PathProblem interval_mfet = exit_time_problem(Domain::interval(-1.0, 1.0));

PdeField value_field(double alpha) {
  const auto h = solve_mgf_bvp(bm1, [](double) { return 1.0; }, 0.0, 0.0, alpha, Grid1D(-1.0, 1.0, 1999));
  return value_from_mgf(h, alpha);
}

struct Shared {
  ExperimentResult fig1;
  double fig1_seconds = 0.0;
  EstimatorReport mc_fine;
  EstimatorReport cov_fine;
};

Outcome mfet_oracle(const Shared& s) {
  Outcome o;
  const double cov0 = s.fig1.summary.number(row_of(s.fig1.summary, 0.0, "cov"), "estimate");
  o.require(std::abs(cov0 - 10.0) <= 0.2, fmt::format("CoV at |x0|=0 is {:.6f} (target 10 +- 2%)", cov0));
  o.require(s.fig1_seconds <= 120.0, fmt::format("fig1 desk runtime {:.1f} s (limit 120 s)", s.fig1_seconds));
  return o;
}

Outcome zero_variance(const Shared& s) {
  Outcome o;
  const auto& t = s.fig1.summary;
  double worst = 0.0;
  for (double r : s.fig1.details.at("radii").get<std::vector<double>>()) {
    const double mc = t.number(row_of(t, r, "mc"), "sample_std");
    const double cov = t.number(row_of(t, r, "cov"), "sample_std");
    worst = std::max(worst, mc > 0.0 ? cov / mc : (cov > 0.0 ? INFINITY : 0.0));
  }
  o.require(worst <= 0.1, fmt::format("max CoV std / MC std over radii = {:.4g} (limit 0.1)", worst));
  const double ratio = std::pow(s.cov_fine.per_path_std / s.mc_fine.per_path_std, 2);
  o.require(ratio <= 1e-3, fmt::format("1-D dt=1e-4 per-path variance ratio = {:.3g} (limit 1e-3)", ratio));
  return o;
}

Outcome pcov_robustness(const Shared& s) {
  Outcome o;
  const auto& t = s.fig1.summary;
  for (const char* kind : {"pcov-0.25", "pcov-1"}) {
    std::vector<std::string> worse;
    for (double r : s.fig1.details.at("radii").get<std::vector<double>>()) {
      const double mc = t.number(row_of(t, r, "mc"), "relative_error");
      const double pc = t.number(row_of(t, r, kind), "relative_error");
      if (!(pc <= mc)) worse.push_back(fmt::format("r={:g} {:.4g}>{:.4g}", r, pc, mc));
    }
    std::string list;
    for (const auto& w : worse) list += " " + w;
    o.require(worse.empty(), fmt::format("{} relative error <= MC at every radius{}", kind,
                                         worse.empty() ? "" : ";" + list));
  }
  return o;
}

Outcome ou_suboptimal() {
  Outcome o;
  const auto r = run_experiment(preset(R"({"experiment": "fig2"})"), worker_count());
  const auto& t = r.summary;
  std::size_t outside = 0;
  for (double radius : r.details.at("radii").get<std::vector<double>>()) {
    const double cov = t.number(row_of(t, radius, "cov"), "estimate");
    const auto mc = row_of(t, radius, "mc");
    if (cov < t.number(mc, "ci_low") || cov > t.number(mc, "ci_high")) ++outside;
  }
  o.require(outside == 0, fmt::format("CoV outside the MC 95% CI at {} radii", outside));
  const double mc_wall = r.details.at("wall_time_total").at("mc").get<double>();
  const double cov_wall = r.details.at("wall_time_total").at("cov").get<double>();
  o.require(cov_wall <= 1.2 * mc_wall,
            fmt::format("CoV wall {:.2f} s vs MC wall {:.2f} s (ratio {:.3f}, limit 1.2)", cov_wall, mc_wall,
                        cov_wall / mc_wall));
  return o;
}

Outcome pathology() {
  Outcome o;
  const auto start = Clock::now();
  const auto r = run_experiment(preset(R"({"experiment": "pathology"})"), worker_count());
  const double elapsed = seconds_since(start);
  const auto& t = r.summary;
  auto frac = [&t](const char* kind) { return t.number(t.where("estimator", kind).at(0), "non_exit_fraction"); };
  o.require(frac("ais-paper-literal") == 1.0,
            fmt::format("controlled non_exit_fraction = {:g} (need 1.0)", frac("ais-paper-literal")));
  o.require(frac("mc") <= 0.05, fmt::format("uncontrolled non_exit_fraction = {:g} (limit 0.05)", frac("mc")));
  o.require(elapsed <= 30.0, fmt::format("runtime {:.1f} s (limit 30 s)", elapsed));
  return o;
}

Outcome pde_oracle() {
  Outcome o;
  const auto r = run_experiment(preset(R"({"experiment": "pde-check"})"));
  const auto& t = r.summary;
  for (std::size_t row = 0; row < t.size(); ++row)
    o.require(t.number(row, "passed") == 1.0, fmt::format("{} = {:.4g} (threshold {:.4g})", t.text(row, "check"),
                                                          t.number(row, "measured"), t.number(row, "threshold")));
  return o;
}

Outcome risk_sensitive(const Shared& s) {
  Outcome o;
  const double alpha = 0.1;
  const double gamma = analytic::value_1d(0.0, 1.0, kEps, alpha);
  const auto v = value_field(alpha);
  const auto coarse = risk_sensitive_gamma(interval_mfet, bm1, v, RiskParams(alpha), interval_settings(2e-4, 50, 20, 701));
  const auto fine = risk_sensitive_gamma(interval_mfet, bm1, v, RiskParams(alpha), interval_settings(1e-4, 50, 20, 701));
  o.require(std::abs(fine.mean() - gamma) <= 0.02 * gamma,
            fmt::format("gamma-hat = {:.5f} vs analytic {:.6f}", fine.mean(), gamma));
  o.require(fine.per_path_std <= 0.05 * gamma,
            fmt::format("per-path std at dt=1e-4 = {:.4f} (limit {:.4f})", fine.per_path_std, 0.05 * gamma));
  o.require(fine.per_path_std < coarse.per_path_std,
            fmt::format("per-path std {:.4f} (dt=2e-4) -> {:.4f} (dt=1e-4)", coarse.per_path_std, fine.per_path_std));
  const double se = std::hypot(s.mc_fine.tau_std_error, fine.tau_std_error);
  o.require(s.mc_fine.mean_tau - fine.mean_tau >= 3.0 * se,
            fmt::format("mean_tau {:.3f} controlled vs {:.3f} uncontrolled ({:.1f} SE)", fine.mean_tau,
                        s.mc_fine.mean_tau, (s.mc_fine.mean_tau - fine.mean_tau) / se));
  return o;
}

Outcome risk_neutral_limit() {
  Outcome o;
  const std::size_t m = 1999;
  const double sigma = std::sqrt(2.0 * kEps);
  const Grid1D g(-1.0, 1.0, m);
  const auto phi = solve_linear_bvp(bm1, [](double) { return 1.0; }, 0.0, 0.0, g);
  const auto dphi = phi.derivatives();
  std::vector<double> value_err, control_err;
  for (double alpha : {0.4, 0.2, 0.1, 0.05, 0.025}) {
    const auto v = value_field(alpha);
    const auto u = control_from_value(v, alpha, sigma);
    double ev = 0.0, eu = 0.0;
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      ev = std::max(ev, std::abs(v[i] - phi[i]));
      eu = std::max(eu, std::abs(u[i] / alpha + sigma * dphi[i]));
    }
    value_err.push_back(ev);
    control_err.push_back(eu);
  }
  auto decreasing = [](const std::vector<double>& e) {
    for (std::size_t k = 1; k < e.size(); ++k)
      if (!(e[k] < e[k - 1])) return false;
    return true;
  };
  auto show = [](const std::vector<double>& e) {
    std::string s;
    for (double x : e) s += fmt::format(" {:.4g}", x);
    return s;
  };
  o.require(decreasing(value_err), "|V - phi| over alpha 0.4..0.025:" + show(value_err));
  o.require(decreasing(control_err), "|u*/alpha + sigma phi'| over alpha 0.4..0.025:" + show(control_err));
  return o;
}

std::vector<double> exit_times(double eps, std::size_t count, std::uint64_t seed) {
  const auto batch = simulate_paths(SdeModel::brownian(1, eps), interval_mfet, ControlPolicy::none(), {},
                                    interval_settings(1e-2, count, 1, seed));
  std::vector<double> out;
  for (const auto& o : batch.outcomes) out.push_back(o.S);
  return out;
}

Outcome diagnostics(const Shared& s) {
  Outcome o;
  std::vector<double> rel;
  std::uint64_t seed = 900;
  for (double eps : {0.2, 0.1, 0.05}) {
    const auto problem = exit_probability_problem(Domain::interval(-1.0, 1.0), std::nullopt, 1.0);
    const auto r = mc_estimate(problem, SdeModel::brownian(1, eps), interval_settings(1e-3, 100, 100, seed++));
    rel.push_back(r.summary.relative_error_defined ? r.summary.relative_error : INFINITY);
  }
  o.require(rel[0] <= rel[1] && rel[1] <= rel[2],
            fmt::format("exit-probability relative error eps 0.2/0.1/0.05: {:.4g} {:.4g} {:.4g}", rel[0], rel[1],
                        rel[2]));

  const double alpha = 0.1;
  auto controls = constant_controls(std::vector<double>{0.0, 0.25, 0.5, 1.0}, 1);
  controls.push_back({"u*", ControlPolicy::pde_control(value_field(alpha), alpha, std::sqrt(2.0 * kEps))});
  const auto rows = gibbs_check(interval_mfet, bm1, controls, alpha, interval_settings(2e-3, 100, 20, 910));
  for (const auto& row : rows)
    o.require(row.gamma_naive <= row.bound + 3.0 * row.combined_std_error,
              fmt::format("Gibbs {}: gamma {:.4f} <= bound {:.4f} + 3 x {:.4f}", row.control, row.gamma_naive,
                          row.bound, row.combined_std_error));

  std::vector<std::vector<double>> sets{exit_times(0.05, 2000, 920), exit_times(0.2, 2000, 921),
                                        {3.0, 3.0, 3.0}, {-5.0, 0.0, 2.5, 40.0}};
  for (std::size_t r : s.fig1.summary.where("estimator", "mc")) {
    std::vector<double> per_run;
    for (std::size_t k : s.fig1.runs.where("estimator", "mc"))
      if (s.fig1.runs.number(k, "radius") == s.fig1.summary.number(r, "radius"))
        per_run.push_back(s.fig1.runs.number(k, "estimate"));
    if (!per_run.empty()) sets.push_back(per_run);
  }
  std::size_t bad = 0;
  for (const auto& set : sets) {
    double mean = 0.0;
    for (double x : set) mean += x;
    mean /= static_cast<double>(set.size());
    double prev = INFINITY;
    for (double a = 1e-3; a < 1e3; a *= 1.5) {
      const double g = cgf_naive(set, a);
      if (!(g <= prev + 1e-12) || !(g <= mean + 1e-12 * std::max(1.0, std::abs(mean)))) ++bad;
      prev = g;
    }
  }
  o.require(bad == 0, fmt::format("cgf_naive monotone and <= mean on {} sample sets ({} violations)", sets.size(), bad));
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto config = preset(R"({"experiment": "custom", "estimators": ["mc", "cov", "pcov", "is", "risk"],
      "controls": [0.5], "deltas": [0.25], "alphas": [0.2], "initial_points": [[0], [0.5]],
      "N": 20, "M": 15, "dt": 0.005, "seed": 2024})");
  const auto base = std::filesystem::temp_directory_path() / "exitlab-acceptance";
  std::filesystem::remove_all(base);
  const std::vector<std::pair<std::string, unsigned>> runs{{"w1", 1}, {"w3", 3}, {"w1-repeat", 1}, {"w4", 4}};
  for (const auto& [name, workers] : runs) write_outputs(run_experiment(config, workers), config, workers, base / name);
  const auto reference = slurp(base / "w1" / "summary.csv");
  for (const auto& [name, workers] : runs)
    o.require(slurp(base / name / "summary.csv") == reference,
              fmt::format("summary.csv of {} ({} workers) matches byte for byte", name, workers));
  std::filesystem::remove_all(base);
  return o;
}

}  // namespace

int main() {
  Shared shared;
  {
    const auto start = Clock::now();
    shared.fig1 = run_experiment(preset(R"({"experiment": "fig1"})"), worker_count());
    shared.fig1_seconds = seconds_since(start);
    const auto phi = CovariateField::ball_mfet(1.0, 1, kEps);
    const std::vector<std::string> kinds{"cov"};
    auto reports = shared_path_estimates(interval_mfet, bm1, std::span(&phi, 1), kinds,
                                         interval_settings(1e-4, 100, 10, 601));
    shared.mc_fine = reports[0];
    shared.cov_fine = reports[1];
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"MFET oracle (fig1 desk)", [&] { return mfet_oracle(shared); }},
      {"zero-variance control variate", [&] { return zero_variance(shared); }},
      {"perturbed control variate robustness", [&] { return pcov_robustness(shared); }},
      {"OU with suboptimal covariate (fig2 desk)", ou_suboptimal},
      {"singular drift pathology", pathology},
      {"PDE oracle", pde_oracle},
      {"risk-sensitive estimator", [&] { return risk_sensitive(shared); }},
      {"risk-neutral limit", risk_neutral_limit},
      {"statistical diagnostics", [&] { return diagnostics(shared); }},
      {"determinism", determinism},
  };

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome result;
    try {
      result = criteria[k].second();
    } catch (const std::exception& e) {
      result.require(false, std::string("exception: ") + e.what());
    }
    if (!result.passed) ++failures;
    fmt::print("criterion {:>2}: {} - {}\n", k + 1, result.passed ? "PASS" : "FAIL", criteria[k].first);
    for (const auto& note : result.notes) fmt::print("    {}\n", note);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
