#include "doctest.h"

#include "fixtures.hpp"
#include "riemobs/conditions.hpp"
#include "riemobs/errors.hpp"

#include <cmath>

using namespace riemobs;
using namespace fixtures;

namespace {

// Gradient-type observer built from the example metric with gain k.
ObserverField example_observer(double k) {
  DynamicalSystem sys = example_system();
  return [sys, k](const Vec& xh, const Vec& y) {
    double a = xh(0), b = xh(1);
    double det = 1 + a * a + (a + b) * (a + b);
    Vec dir = v2(1 + a * a, 1 - a * b);
    return Vec(sys.f(xh) - (2 * k / det) * (a - y(0)) * dir);
  };
}

bool same_report(const ConditionReport& a, const ConditionReport& b) {
  return a.verdict == b.verdict && a.worst_residual == b.worst_residual &&
         a.witness_point == b.witness_point && a.witness_direction == b.witness_direction &&
         a.rank_deficient_points == b.rank_deficient_points;
}

}  // namespace

TEST_CASE("kernel_basis") {
  DynamicalSystem sys = example_system();
  int rank = -1;
  Mat b = kernel_basis(sys, v2(0.4, -1), &rank);
  CHECK(rank == 1);
  REQUIRE(b.cols() == 1);
  CHECK(std::abs(b(0, 0)) <= 1e-15);
  CHECK(std::abs(b(1, 0)) == doctest::Approx(1.0));

  DynamicalSystem sq(2, {px("x2"), px("0")}, {px("x1^2")});
  Mat full = kernel_basis(sq, v2(0, 1), &rank);
  CHECK(rank == 0);
  CHECK(full.cols() == 2);
}

TEST_CASE("conditional negativity: example metric passes, identity fails with a witness") {
  DynamicalSystem sys = example_system();
  ConditionReport ok = check_conditional_negativity(example_metric(), sys, Grid(Box::cube(2, -2, 2)));
  CHECK(ok.verdict == Verdict::pass);
  CHECK(ok.worst_residual == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(ok.grid_size == 41u * 41u);
  CHECK(ok.rank_deficient_points.empty());

  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -5, 5));
  ConditionReport bad = check_conditional_negativity(id, sys, Grid(Box::cube(2, -3, 3)));
  CHECK(bad.verdict == Verdict::fail);
  REQUIRE(bad.witness_point.size() == 2);
  CHECK(bad.witness_point[0] * bad.witness_point[1] < 0);
  REQUIRE(bad.witness_direction);
  CHECK((*bad.witness_direction)[0] == doctest::Approx(0.0));
  CHECK((*bad.witness_direction)[1] == doctest::Approx(1.0));
  double x1 = bad.witness_point[0], x2 = bad.witness_point[1];
  CHECK(bad.worst_residual == doctest::Approx(-4 * x1 * x2 / std::sqrt(1 + x1 * x1)));
}

TEST_CASE("conditional negativity lists points where dh/dx loses rank") {
  DynamicalSystem sq(2, {px("x2"), px("-x1")}, {px("x1^2")});
  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -5, 5));
  ConditionReport r = check_conditional_negativity(id, sq, Grid(Box::cube(2, -1, 1), 5));
  CHECK(r.rank_deficient_points.size() == 5);
  for (const auto& p : r.rank_deficient_points) CHECK(p[0] == 0.0);
}

TEST_CASE("RhoTable interpolates multilinearly and clamps") {
  Grid g(Box::cube(2, -1, 1), 5);
  std::vector<double> vals;
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec x = g.point(i);
    vals.push_back(2 + 3 * x(0) - x(1) + x(0) * x(1));
  }
  RhoTable t(g, vals);
  CHECK(t(v2(0.3, -0.7)) == doctest::Approx(2 + 0.9 + 0.7 - 0.21));
  CHECK(t(v2(5, 5)) == doctest::Approx(2 + 3 - 1 + 1));
  CHECK(t.covers(v2(0.5, 0.5)));
  CHECK_FALSE(t.covers(v2(1.5, 0)));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(t(g.point(i)) == vals[i]);
  CHECK_THROWS_AS(RhoTable(g, {1.0}), ValidationError);
}

TEST_CASE("fit_rho_q round-trips through check_h2") {
  MetricField p = example_metric();
  DynamicalSystem sys = example_system();
  Grid grid(Box::cube(2, -2, 2), 21);
  RhoFit fit = fit_rho_q(p, sys, grid);
  CHECK(fit.q_achieved > 0);
  CHECK(fit.q_target == 0.5 * fit.q_achieved);
  CHECK(fit.report.verdict == Verdict::pass);
  CHECK(fit.report.worst_residual <= 0);
  CHECK(fit.rho.max() > 0);
  CHECK(check_h2(p, sys, fit.rho, fit.q_target, grid).passed());

  // Slightly less rho than fitted must break the inequality somewhere.
  std::vector<double> smaller = fit.rho.values();
  for (double& v : smaller) v *= 0.9;
  ConditionReport r = check_h2(p, sys, RhoTable(grid, smaller), fit.q_target, grid);
  CHECK(r.verdict == Verdict::fail);
  CHECK(r.witness_point.size() == 2);

  RhoFit over = fit_rho_q(p, sys, grid, 2 * fit.q_achieved);
  CHECK(over.report.verdict == Verdict::fail);
}

TEST_CASE("fit_rho_q throws Infeasible when the kernel condition fails") {
  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -5, 5));
  CHECK_THROWS_AS(fit_rho_q(id, example_system(), Grid(Box::cube(2, -3, 3), 11)), Infeasible);
}

TEST_CASE("totally geodesic check") {
  DynamicalSystem sys = example_system();
  Grid grid(Box::cube(2, -2, 2));
  ConditionReport ok = check_totally_geodesic(example_metric(), sys, grid);
  CHECK(ok.verdict == Verdict::pass);
  CHECK(ok.worst_residual <= 1e-10);

  MetricField diag = metric2("1", "0", "1+x1^2");
  ConditionReport bad = check_totally_geodesic(diag, sys, grid);
  CHECK(bad.verdict == Verdict::fail);
  CHECK(bad.worst_residual == doctest::Approx(2.0));  // |Gamma^1_22| = |x1| at the edge
  CHECK(std::abs(bad.witness_point[0]) == 2.0);
}

TEST_CASE("geodesic convexity spot check") {
  DynamicalSystem sys = example_system();
  Vec y = Vec::Constant(1, 0.5);
  auto pairs = sample_level_set_pairs(sys, y, Box::cube(2, -2, 2), 10, 5);
  REQUIRE(pairs.size() == 10);
  for (const auto& [a, b] : pairs) CHECK(a(0) == doctest::Approx(0.5).epsilon(1e-12));
  ConditionReport ok = check_geodesic_convexity_spot(example_metric(), sys, y, pairs);
  CHECK(ok.verdict == Verdict::pass);
  CHECK(ok.worst_residual <= 1e-6);

  ConditionReport bad = check_geodesic_convexity_spot(metric2("1", "0", "1+x1^2"), sys, y, pairs);
  CHECK(bad.verdict == Verdict::fail);

  std::vector<PointPair> off{{v2(0.5, 0), v2(0.6, 1)}};
  CHECK_THROWS_AS(check_geodesic_convexity_spot(example_metric(), sys, y, off), ValidationError);
}

TEST_CASE("gain margin is negative with a positive gain and zero without") {
  MetricField p = example_metric();
  DynamicalSystem sys = example_system();
  ConditionReport ok = check_gain_margin(p, sys, example_observer(1.0), v2(0.2, -0.4), v2(-0.6, 0.9));
  CHECK(ok.verdict == Verdict::pass);
  CHECK(ok.worst_residual < 0);
  ConditionReport zero = check_gain_margin(p, sys, example_observer(0.0), v2(0.2, -0.4), v2(-0.6, 0.9));
  CHECK(zero.verdict == Verdict::fail);
}

TEST_CASE("serial and parallel checks return identical reports") {
  MetricField p = example_metric();
  DynamicalSystem sys = example_system();
  Grid grid(Box::cube(2, -2, 2), 31);
  CHECK(same_report(check_conditional_negativity(p, sys, grid, 1e-9, Exec::serial),
                    check_conditional_negativity(p, sys, grid, 1e-9, Exec::parallel)));
  CHECK(same_report(check_totally_geodesic(p, sys, grid, 1e-8, Exec::serial),
                    check_totally_geodesic(p, sys, grid, 1e-8, Exec::parallel)));
  FitOptions s, q;
  s.exec = Exec::serial;
  q.exec = Exec::parallel;
  RhoFit a = fit_rho_q(p, sys, grid, std::nullopt, s), b = fit_rho_q(p, sys, grid, std::nullopt, q);
  CHECK(a.q_achieved == b.q_achieved);
  CHECK(a.rho.values() == b.rho.values());
}

TEST_CASE("checks agree across the change of coordinates") {
  Diffeomorphism d = example_phi();
  MetricField p = example_metric();
  DynamicalSystem sys = example_system();
  MetricField pbar = transform_metric(p, d, Box::cube(2, -10, 10));
  DynamicalSystem sbar = transform_system(sys, d);
  Grid grid(Box::cube(2, -2, 2), 21);
  CHECK(check_conditional_negativity(pbar, sbar, grid).passed());
  CHECK(check_totally_geodesic(pbar, sbar, grid).passed());

  MetricField diag = metric2("1", "0", "1+x1^2");
  MetricField dbar = transform_metric(diag, d, Box::cube(2, -10, 10));
  CHECK_FALSE(check_totally_geodesic(dbar, sbar, grid).passed());
}
