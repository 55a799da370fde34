#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "exitlab/experiments.hpp"

int main(int argc, char** argv) {
  using namespace exitlab;

  CLI::App app{"Monte Carlo estimators for first-exit problems of diffusions"};
  app.set_version_flag("--version", kVersion);

  std::string experiment, config_path, preset, out_dir;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  app.add_option("experiment", experiment, "fig1 | fig2 | pathology | alpha-sweep | cov-limit | pde-check | custom")
      ->required();
  app.add_option("--config", config_path, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "override the configured seed");
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  auto* preset_opt = app.add_option("--preset", preset, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentKind kind = parse_experiment(experiment);
    ExperimentConfig config = load_config(config_path);
    if (config.experiment != kind && config.experiment != ExperimentKind::custom)
      throw ConfigError(fmt::format("config describes '{}' but '{}' was requested", to_string(config.experiment),
                                    experiment));
    config.experiment = kind;
    if (*seed_opt) config.seed = seed;
    if (*preset_opt) config.preset = parse_preset(preset);
    config = apply_preset(config);
    validate_config(config);

    std::filesystem::path dir = *out_opt ? out_dir : config.output.value_or("out/" + experiment);
    const auto result = run_experiment(config, workers);
    write_outputs(result, config, workers, dir);
    std::cout << result.summary.to_csv();
    std::cerr << fmt::format("wrote {}\n", dir.string());
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
