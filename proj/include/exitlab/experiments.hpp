#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "exitlab/report.hpp"

namespace exitlab {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid or inconsistent experiment configuration; raised before simulating.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { fig1, fig2, pathology, alpha_sweep, cov_limit, pde_check, custom };
enum class Preset { desk, paper };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment(const std::string& name);
std::string to_string(Preset preset);
Preset parse_preset(const std::string& name);

/// Drift matrix choice: a scalar rate (0 = Brownian motion) or "tridiag".
struct ThetaSpec {
  bool tridiag = false;
  double value = 0.0;
};

/// Experiment description. JSON keys match the member names; unset members
/// are filled from the preset defaults of the experiment.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::custom;
  std::optional<Preset> preset;

  std::optional<std::size_t> n;
  std::optional<ThetaSpec> theta;
  std::optional<double> eps;

  std::optional<double> R;
  std::optional<std::vector<double>> interval;

  /// "exit-time" or "exit-probability" (custom only).
  std::optional<std::string> problem;
  /// "left", "right" or "any" for exit-probability problems.
  std::optional<std::string> exit_side;
  std::optional<double> horizon;

  std::optional<std::vector<std::string>> estimators;
  std::optional<std::size_t> N;
  std::optional<std::size_t> M;
  std::optional<double> dt;
  std::optional<std::size_t> max_steps;
  std::optional<std::uint64_t> seed;

  std::optional<std::vector<double>> radii;
  std::optional<std::vector<std::vector<double>>> initial_points;
  std::optional<std::vector<double>> alphas;
  std::optional<std::vector<double>> deltas;
  /// Constant controls for importance sampling (custom, estimator "is").
  std::optional<std::vector<double>> controls;
  std::optional<double> c;
  std::optional<std::size_t> grid_m;
  /// Step budget multiple of the mean uncontrolled exit steps (pathology).
  std::optional<double> budget_factor;

  std::optional<std::string> output;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Fills unset members from the preset (desk when none is given).
ExperimentConfig apply_preset(ExperimentConfig config);

/// Checks a fully resolved configuration; throws ConfigError.
void validate_config(const ExperimentConfig& config);

struct ExperimentResult {
  std::string experiment;
  Table summary;
  Table runs;
  Plot plot;
  /// Extra manifest entries (sweep points, wall times, notes).
  nlohmann::json details = nlohmann::json::object();
};

/// Resolves, validates and runs the configured experiment.
ExperimentResult run_experiment(const ExperimentConfig& config, unsigned workers = 1);

ExperimentResult run_fig1(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_fig2(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_pathology(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_alpha_sweep(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_cov_limit(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_pde_check(const ExperimentConfig& config, unsigned workers = 1);
ExperimentResult run_custom(const ExperimentConfig& config, unsigned workers = 1);

/// Writes summary.csv, runs.csv, plot.svg and manifest.json into `dir`.
void write_outputs(const ExperimentResult& result, const ExperimentConfig& config, unsigned workers,
                   const std::filesystem::path& dir);

}  // namespace exitlab
