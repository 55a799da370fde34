#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "exitlab/experiments.hpp"

using namespace exitlab;
using nlohmann::json;

namespace {

ExperimentConfig parse(const std::string& text) { return config_from_json(json::parse(text)); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "exitlab-tests" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

double value(const Table& t, const std::string& key_col, const std::string& key, double point,
             const std::string& point_col, const std::string& col) {
  for (std::size_t r : t.where(key_col, key))
    if (std::abs(t.number(r, point_col) - point) < 1e-12) return t.number(r, col);
  FAIL("row not found: " << key << " at " << point);
  return NAN;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse(R"({"experiment": "fig2", "n": 10, "theta": "tridiag", "R": 1.5, "seed": 9})");
  CHECK(c.experiment == ExperimentKind::fig2);
  CHECK(c.theta->tridiag);
  CHECK(*c.seed == 9);
  CHECK_FALSE(c.M.has_value());

  CHECK_THROWS_AS(parse(R"({"experiment": "fig1", "colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"experiment": "fig9"})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"theta": "diag"})"), ConfigError);
  CHECK_THROWS_AS(parse(R"({"N": "ten"})"), ConfigError);
  CHECK_THROWS_AS(parse(R"([1, 2])"), ConfigError);

  const auto round = config_from_json(config_to_json(apply_preset(c)));
  CHECK(config_to_json(round) == config_to_json(apply_preset(c)));
}

TEST_CASE("presets") {
  const auto desk = apply_preset(parse(R"({"experiment": "fig1"})"));
  CHECK(*desk.n == 100);
  CHECK(*desk.R == 10.0);
  CHECK(*desk.eps == 0.05);
  CHECK(*desk.N == 10);
  CHECK(*desk.M == 20);
  CHECK(*desk.dt == 1e-3);
  CHECK(desk.radii->size() == 10);
  const auto paper = apply_preset(parse(R"({"experiment": "fig1", "preset": "paper"})"));
  CHECK(*paper.M == 100);
  CHECK(*paper.dt == 1e-4);
  const auto kept = apply_preset(parse(R"({"experiment": "fig1", "preset": "paper", "M": 7})"));
  CHECK(*kept.M == 7);
  const auto fig2 = apply_preset(parse(R"({"experiment": "fig2"})"));
  CHECK(*fig2.n == 10);
  CHECK(fig2.theta->tridiag);
}

TEST_CASE("configuration errors are raised before simulation") {
  auto expect_error = [](const std::string& text) {
    CHECK_THROWS_AS(run_experiment(parse(text)), ConfigError);
  };
  expect_error(R"({"experiment": "custom", "n": 3, "R": 1, "estimators": ["risk"], "alphas": [0.1]})");
  expect_error(R"({"experiment": "alpha-sweep", "n": 2, "R": 1})");
  expect_error(R"({"experiment": "cov-limit", "n": 5, "R": 1})");
  expect_error(R"({"experiment": "fig1", "theta": 1.0})");
  expect_error(R"({"experiment": "fig1", "interval": [-1, 1]})");
  expect_error(R"({"experiment": "custom", "R": 1, "interval": [-1, 1]})");
  expect_error(R"({"experiment": "custom", "interval": [1, -1]})");
  expect_error(R"({"experiment": "custom", "N": 0})");
  expect_error(R"({"experiment": "custom", "dt": -0.1})");
  expect_error(R"({"experiment": "alpha-sweep", "alphas": [0.1, 0.0]})");
  expect_error(R"({"experiment": "custom", "estimators": ["mc", "magic"]})");
  expect_error(R"({"experiment": "custom", "estimators": ["is"]})");
  expect_error(R"({"experiment": "custom", "initial_points": [[0, 0]]})");
  expect_error(R"({"experiment": "pathology", "interval": [0, 1]})");
}

TEST_CASE("fig1 at the centre and on the boundary") {
  const auto r = run_experiment(parse(R"({"experiment": "fig1", "radii": [0, 10]})"));
  const auto& t = r.summary;
  const double cov0 = value(t, "estimator", "cov", 0.0, "radius", "estimate");
  CHECK(cov0 >= 9.8);
  CHECK(cov0 <= 10.2);
  CHECK(value(t, "estimator", "cov", 0.0, "radius", "sample_std") <=
        0.1 * value(t, "estimator", "mc", 0.0, "radius", "sample_std"));
  for (const auto* kind : {"mc", "cov", "pcov-0.25", "pcov-1"})
    CHECK(value(t, "estimator", kind, 10.0, "radius", "estimate") == 0.0);
  CHECK(r.runs.size() == 2 * 4 * 20);
}

TEST_CASE("fig2 at desk scale") {
  const auto r = run_experiment(parse(R"({"experiment": "fig2", "radii": [0, 0.75], "M": 10})"));
  for (double radius : {0.0, 0.75}) {
    const double cov = value(r.summary, "estimator", "cov", radius, "radius", "estimate");
    CHECK(cov >= value(r.summary, "estimator", "mc", radius, "radius", "ci_low"));
    CHECK(cov <= value(r.summary, "estimator", "mc", radius, "radius", "ci_high"));
  }
  const auto& dirs = r.details.at("directions");
  REQUIRE(dirs.size() == 2);
  double norm = 0.0;
  for (double v : dirs[1].get<std::vector<double>>()) norm += v * v;
  CHECK(norm == doctest::Approx(1.0));
  CHECK(r.details.at("wall_time_total").at("mc").get<double>() > 0.0);
}

TEST_CASE("pathology") {
  const auto r = run_experiment(parse(R"({"experiment": "pathology"})"));
  const auto& t = r.summary;
  auto frac = [&t](const char* kind) { return t.number(t.where("estimator", kind).at(0), "non_exit_fraction"); };
  CHECK(frac("mc") <= 0.05);
  CHECK(frac("ais-paper-literal") == 1.0);
  CHECK(frac("ais-sigma-loggrad") >= 0.9);
  CHECK(r.details.at("budget_steps").get<std::size_t>() == 100000);
}

TEST_CASE("alpha sweep") {
  const auto r = run_experiment(parse(R"({"experiment": "alpha-sweep"})"));
  const auto& t = r.summary;
  const auto risk = t.where("estimator", "risk");
  REQUIRE(risk.size() == 5);
  for (std::size_t k = 1; k < risk.size(); ++k) {
    // alphas are listed in decreasing order
    CHECK(t.number(risk[k], "mean_tau") >= t.number(risk[k - 1], "mean_tau"));
    const double se = std::hypot(t.number(risk[k], "sample_std"), t.number(risk[k - 1], "sample_std")) /
                      std::sqrt(20.0);
    CHECK(t.number(risk[k - 1], "estimate") <= t.number(risk[k], "estimate") + 3.0 * se);
  }
  const double mc_tau = t.number(t.where("estimator", "mc").at(0), "mean_tau");
  CHECK(t.number(risk.back(), "mean_tau") <= mc_tau);
  // max |u*| = sigma k tanh(k R), k = sqrt(alpha / eps)
  auto umax = [](double alpha) {
    const double k = std::sqrt(alpha / 0.05);
    return std::sqrt(0.1) * k * std::tanh(k);
  };
  const double ratio = t.number(risk.back(), "max_abs_control") / t.number(risk.front(), "max_abs_control");
  CHECK(ratio == doctest::Approx(umax(0.025) / umax(0.4)).epsilon(1e-3));
  CHECK(ratio < 0.16);
  for (std::size_t row : risk)
    CHECK(t.number(row, "estimate") == doctest::Approx(t.number(row, "reference")).epsilon(0.02));
}

TEST_CASE("control-variate limit") {
  const auto r = run_experiment(parse(R"({"experiment": "cov-limit"})"));
  const auto& t = r.summary;
  const auto risk = t.where("estimator", "risk");
  REQUIRE(risk.size() == 4);
  for (std::size_t k = 1; k < risk.size(); ++k)
    CHECK(t.number(risk[k], "control_error") < t.number(risk[k - 1], "control_error"));
  const auto cov = t.where("estimator", "cov").at(0);
  CHECK(t.number(cov, "variance_ratio") <= 1e-3);
  CHECK(std::abs(t.number(cov, "martingale_mean")) <= 4.0 * t.number(cov, "martingale_se"));
}

TEST_CASE("pde check passes every item") {
  const auto r = run_experiment(parse(R"({"experiment": "pde-check"})"));
  REQUIRE(r.summary.size() >= 7);
  for (std::size_t row = 0; row < r.summary.size(); ++row) {
    INFO(r.summary.text(row, "check"));
    CHECK(r.summary.number(row, "passed") == 1.0);
  }
}

TEST_CASE("outputs are reproducible across worker counts") {
  const auto config = apply_preset(parse(R"({"experiment": "custom", "estimators": ["mc", "cov", "is"],
      "controls": [0.5], "initial_points": [[0], [0.4]], "N": 16, "M": 12, "dt": 0.01, "seed": 31})"));
  const auto a = scratch("w1"), b = scratch("w3"), again = scratch("w1-again");
  write_outputs(run_experiment(config, 1), config, 1, a);
  write_outputs(run_experiment(config, 3), config, 3, b);
  write_outputs(run_experiment(config, 1), config, 1, again);
  for (const auto* file : {"summary.csv", "runs.csv", "plot.svg"}) {
    CHECK(slurp(a / file) == slurp(b / file));
    CHECK(slurp(a / file) == slurp(again / file));
  }
  const auto manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest.at("seed") == 31);
  CHECK(manifest.at("version") == kVersion);
  CHECK(manifest.at("config").at("experiment") == "custom");
  CHECK(manifest.contains("created"));
  CHECK(slurp(a / "plot.svg").rfind("<svg", 0) == 0);
}

TEST_CASE("table and svg rendering") {
  Table t({"name", "x", "k"});
  t.add({std::string("a,b"), 0.1, std::int64_t{3}});
  t.add({std::string("plain"), NAN, std::int64_t{-1}});
  CHECK(t.to_csv() == "name,x,k\n\"a,b\",0.1,3\nplain,nan,-1\n");
  CHECK_THROWS(t.add({1.0}));
  CHECK(t.where("name", "plain") == std::vector<std::size_t>{1});

  Plot p{"t<1>", "x", "y", false, true, {{"s", {1, 2}, {1, 100}, {0.5, 50}, {2, 200}, true}}};
  const auto svg = render_svg(p);
  CHECK(svg.find("t&lt;1&gt;") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
}
