#include <doctest.h>

#include <cmath>
#include <vector>

#include "exitlab/analytic.hpp"
#include "exitlab/trajectory.hpp"

using namespace exitlab;

namespace {

Vector vec1(double v) { return Vector::Constant(1, v); }

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  double s = 0.0, s2 = 0.0;
  for (double x : xs) s += x;
  const double n = static_cast<double>(xs.size());
  const double mean = s / n;
  for (double x : xs) s2 += (x - mean) * (x - mean);
  return {mean, std::sqrt(s2 / (n - 1) / n)};
}

SdeModel unit_drift_noise_free() {
  return SdeModel::with_drift(1, [](const Vector&, Vector& out) { out.setConstant(1, 1.0); }, 0.05)
      .without_noise();
}

}  // namespace

TEST_CASE("em_step examples") {
  const ControlPolicy none = ControlPolicy::none();
  const Vector x = Vector::Constant(3, 0.7);
  CHECK(em_step(x, 0.0, SdeModel::brownian(3, 0.05), none, 0.1, Vector::Zero(3)) == x);

  const Vector ou = em_step(vec1(1.0), 0.0, SdeModel::scalar_ou(1, 1.0, 0.5), none, 0.1, vec1(0.2));
  CHECK(ou(0) == doctest::Approx(1.1).epsilon(1e-15));

  const auto push = ControlPolicy::constant(1, 1.0);
  CHECK(em_step(vec1(0.0), 0.0, SdeModel::brownian(1, 0.5), push, 0.1, vec1(0.0))(0) ==
        doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("em_step reports blow-up with the step index") {
  const auto model = SdeModel::scalar_ou(1, 1.0, 0.5);
  try {
    em_step(vec1(1e308), 0.0, model, ControlPolicy::none(), 10.0, vec1(0.0), 42);
    FAIL("expected NumericalBlowup");
  } catch (const NumericalBlowup& e) {
    CHECK(e.step() == 42);
  }
}

TEST_CASE("deterministic exit under unit drift") {
  const auto model = unit_drift_noise_free();
  const auto none = ControlPolicy::none();

  SUBCASE("dt = 1/8 reaches the right end in 8 steps") {
    const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
    const auto out = run_trajectory(model, problem, none, {}, vec1(0.0), {0.125, 1000}, {1, 0, 0});
    CHECK(out.exited);
    REQUIRE(out.exit_label.has_value());
    CHECK(*out.exit_label == ExitLabel::right);
    CHECK(out.steps == 8);
    CHECK(out.tau == 1.0);
    CHECK(out.S == 1.0);
  }
  SUBCASE("dt = 0.1 takes 10 steps to pass 0.95") {
    const auto problem = exit_time_problem(Domain::interval(-1.0, 0.95));
    const auto out = run_trajectory(model, problem, none, {}, vec1(0.0), {0.1, 1000}, {1, 0, 0});
    CHECK(out.exited);
    CHECK(*out.exit_label == ExitLabel::right);
    CHECK(out.steps == 10);
    CHECK(out.tau == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out.S == out.tau);
  }
  SUBCASE("budget stop is data, not an error") {
    const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
    const auto out = run_trajectory(model, problem, none, {}, vec1(0.0), {0.125, 3}, {1, 0, 0});
    CHECK_FALSE(out.exited);
    CHECK(out.reason == StopReason::budget);
    CHECK(out.steps == 3);
    CHECK(out.tau == 3 * 0.125);
  }
  SUBCASE("horizon stop") {
    const auto problem = exit_probability_problem(Domain::interval(-1.0, 1.0), ExitLabel::right, 0.5);
    const auto out = run_trajectory(model, problem, none, {}, vec1(0.0), {0.125, 1000}, {1, 0, 0});
    CHECK_FALSE(out.exited);
    CHECK(out.reason == StopReason::horizon);
    CHECK(out.steps == 4);
    CHECK(out.S == 0.0);
  }
  SUBCASE("starting on the boundary exits immediately") {
    const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
    const auto out = run_trajectory(model, problem, none, {}, vec1(1.0), {0.125, 1000}, {1, 0, 0});
    CHECK(out.exited);
    CHECK(out.steps == 0);
    CHECK(out.S == 0.0);
  }
}

TEST_CASE("zero noise: M = 0 and log L has no stochastic part") {
  const auto model = SdeModel::brownian(2, 0.05).without_noise();
  const auto problem = exit_time_problem(Domain::ball(1.0));
  const auto policy = ControlPolicy::constant(2, 0.5);
  const CovariateField cov[] = {CovariateField::ball_mfet(1.0, 2, 0.05)};
  const Vector x0 = Vector::Constant(2, 0.1);
  const auto a = run_trajectory(model, problem, policy, cov, x0, {0.01, 100000}, {3, 1, 2});
  const auto b = run_trajectory(model, problem, policy, cov, x0, {0.01, 100000}, {99, 7, 5});
  CHECK(a.exited);
  CHECK(a.M() == 0.0);
  CHECK(a.logL == a.half_u2);
  CHECK(a.half_u2 == doctest::Approx(0.5 * 0.5 * 0.5 * 2 * a.tau));
  CHECK(a.steps == b.steps);
  CHECK(a.S == b.S);
  CHECK(a.logL == b.logL);
}

TEST_CASE("uncontrolled paths have zero likelihood terms") {
  const auto model = SdeModel::brownian(1, 0.05);
  const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto out = run_trajectory(model, problem, ControlPolicy::none(), {}, vec1(0.0), {1e-2, 100000}, {5, 0, i});
    CHECK(out.logL == 0.0);
    CHECK(out.half_u2 == 0.0);
    CHECK(out.steps * 1e-2 >= out.tau);
  }
}

TEST_CASE("1-D Brownian mean exit time") {
  const auto model = SdeModel::brownian(1, 0.05);
  const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
  std::vector<double> s;
  for (std::uint64_t i = 0; i < 10000; ++i)
    s.push_back(run_trajectory(model, problem, ControlPolicy::none(), {}, vec1(0.0), {1e-3, 1000000}, {11, 0, i}).S);
  const auto m = moments(s);
  CHECK(m.mean >= 9.5);
  CHECK(m.mean <= 10.5);
}

TEST_CASE("Girsanov reweighting and KL nonnegativity") {
  const auto model = SdeModel::brownian(1, 0.05);
  const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
  const auto policy = ControlPolicy::constant(1, 0.5);
  const TrajectorySettings ts{1e-2, 1000000};
  std::vector<double> mc, weighted, logl;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    mc.push_back(run_trajectory(model, problem, ControlPolicy::none(), {}, vec1(0.0), ts, {21, 0, i}).S);
    const auto q = run_trajectory(model, problem, policy, {}, vec1(0.0), ts, {22, 0, i});
    weighted.push_back(q.S * std::exp(-q.logL));
    logl.push_back(q.logL);
  }
  const auto p = moments(mc);
  const auto w = moments(weighted);
  CHECK(std::abs(w.mean - p.mean) <= 2.576 * std::hypot(p.se, w.se));
  const auto kl = moments(logl);
  CHECK(kl.mean >= -4.0 * kl.se);
}

TEST_CASE("covariate martingale and exit-time bias shrink with dt") {
  // S - M with the exact MFET covariate has the same mean as S and tiny variance,
  // which isolates the discretization bias.
  const auto model = SdeModel::brownian(1, 0.05);
  const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
  const CovariateField cov[] = {CovariateField::ball_mfet(1.0, 1, 0.05)};
  std::vector<double> means;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    std::vector<double> v;
    for (std::uint64_t i = 0; i < 4000; ++i) {
      const auto out = run_trajectory(model, problem, ControlPolicy::none(), cov, vec1(0.0), {dt, 1000000}, {31, 0, i});
      v.push_back(out.S - out.M());
    }
    means.push_back(moments(v).mean);
  }
  const double d1 = std::abs(means[0] - means[1]);
  const double d2 = std::abs(means[1] - means[2]);
  const double d3 = std::abs(means[2] - means[3]);
  CHECK(d2 < d1);
  CHECK(d3 < d2);
  for (double m : means) CHECK(m > 10.0);
}

TEST_CASE("martingale has mean zero") {
  const auto model = SdeModel::brownian(1, 0.05);
  const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
  const CovariateField cov[] = {CovariateField::ball_mfet(1.0, 1, 0.05)};
  std::vector<double> ms;
  for (std::uint64_t i = 0; i < 10000; ++i)
    ms.push_back(run_trajectory(model, problem, ControlPolicy::none(), cov, vec1(0.3), {1e-2, 1000000}, {41, 0, i}).M());
  const auto m = moments(ms);
  CHECK(std::abs(m.mean) <= 4.0 * m.se);
}

TEST_CASE("non-finite covariate gradient is rejected") {
  const auto model = SdeModel::brownian(1, 0.05);
  const auto problem = exit_time_problem(Domain::interval(-1.0, 1.0));
  const CovariateField cov[] = {CovariateField::from_gradient(
      [](const Vector&, Vector& out) { out.setConstant(1, std::nan("")); })};
  CHECK_THROWS_AS(run_trajectory(model, problem, ControlPolicy::none(), cov, vec1(0.0), {1e-2, 100}, {1, 0, 0}),
                  InvalidCovariate);
}

TEST_CASE("pde-control must cover the domain") {
  const PdeField v(Grid1D(-0.5, 0.5, 9), std::vector<double>(11, 0.0));
  const auto p = ControlPolicy::pde_control(v, 0.1, std::sqrt(0.1));
  CHECK_THROWS_AS(p.check_covers(-1.0, 1.0), std::invalid_argument);
  CHECK_NOTHROW(p.check_covers(-0.5, 0.5));
}

TEST_CASE("perturbed covariate") {
  const auto base = CovariateField::ball_mfet(10.0, 3, 0.05);
  const Vector x = (Vector(3) << 0.3, -1.2, 2.0).finished();
  Vector g0(3), g1(3), g2(3);
  base.gradient(x, g0);
  perturb_covariate(base, 0.0).gradient(x, g1);
  CHECK(g0 == g1);
  perturb_covariate(base, 0.25).gradient(x, g2);
  for (int i = 0; i < 3; ++i) CHECK(g2(i) == doctest::Approx(g0(i) + 0.25 * std::sin(x(i))));
  CHECK_THROWS_AS(perturb_covariate(base, -1.0), std::invalid_argument);
}
