#include "doctest.h"

#include "fixtures.hpp"
#include "riemobs/errors.hpp"
#include "riemobs/observer_sim.hpp"

#include <cmath>
#include <random>

using namespace riemobs;
using namespace fixtures;

TEST_CASE("observer_rhs") {
  Example1 ex = builtin_example1();
  ObserverSpec s = ex.observer(1.0);
  Vec xh = v2(0.3, -0.8);
  Vec y = ex.sys.h(xh);
  CHECK((observer_rhs(s, xh, y) - ex.sys.f(xh)).norm() == 0.0);

  Vec r = observer_rhs(s, v2(0, 0), Vec::Ones(1));
  CHECK(r(0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(r(1) == doctest::Approx(2.0).epsilon(1e-14));

  Vec y1 = Vec::Constant(1, -0.4);
  Vec c1 = observer_rhs(s, xh, y1) - ex.sys.f(xh);
  Vec c2 = observer_rhs(s.scaled(2.0), xh, y1) - ex.sys.f(xh);
  CHECK((c2 - 2.0 * c1).norm() <= 1e-15 * c1.norm());

  ObserverSpec e = s;
  e.gain = parse("1+x1^2", kVars);
  Vec ce = observer_rhs(e, xh, y1) - ex.sys.f(xh);
  CHECK((ce - 1.09 * c1).norm() <= 1e-14);
  CHECK(e.scaled(3.0).gain_at(xh) == doctest::Approx(3 * 1.09));
}

TEST_CASE("observer spec validation") {
  Example1 ex = builtin_example1();
  ObserverSpec two = ex.observer(1.0);
  two.sys = DynamicalSystem(2, {px("x2"), px("0")}, {px("x1"), px("x2")});
  CHECK_THROWS_AS(two.validate(), ValidationError);
  CHECK_THROWS_AS(ex.observer(-1.0).validate(), ValidationError);
  CHECK_NOTHROW(ex.observer(0.0).validate());
}

TEST_CASE("reference_observer_rhs") {
  ReferenceStep s = reference_observer_rhs(v2(0, 0), Vec::Zero(1));
  CHECK(s.derivative.isZero(0.0));
  ReferenceStep t = reference_observer_rhs(v2(1, 0), Vec::Zero(1));
  CHECK(t.derivative(0) == -1.0);
  CHECK(t.derivative(1) == -1.0);
  CHECK(t.estimate == v2(1, 0));
  ReferenceStep u = reference_observer_rhs(v2(0.5, 2), Vec::Ones(1));
  CHECK(u.estimate(1) == doctest::Approx(2 / std::sqrt(2.0)));
}

TEST_CASE("builtin example bundle") {
  Example1 ex = builtin_example1();
  CHECK(ex.sys.f(v2(0, 1)) == v2(1, 0));
  CHECK(ex.V(v2(1, 0), v2(0, 0)) == 1.0);
  Mat p = eval_metric(ex.metric, v2(0, 0));
  CHECK(p(0, 0) == 2.0);
  CHECK(p(0, 1) == -1.0);
  CHECK(p(1, 1) == 1.0);
  CHECK(ex.distance_oracle(v2(0, 0), v2(1, 0)) == 1.0);
  CHECK(ex.distance_oracle(v2(1, 1), v2(0, 0)) == doctest::Approx(std::sqrt(3 - std::sqrt(2.0))));
  CHECK(ex.diffeo.forward(v2(1, 1))(1) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("reference observer: V decays exactly like exp(-t)") {
  Example1 ex = builtin_example1();
  SimulationTrace tr = simulate(ex.sys, ex.reference, v2(0, 1), v2(1, 0), 5.0);
  attach_oracle(tr, ex.V);
  const auto& v = *tr.v;
  CHECK(tr.size() == 501);
  for (std::size_t j = 0; j < tr.size(); ++j)
    CHECK(std::abs(v[j] - v[0] * std::exp(-tr.t[j])) <= 1e-6 * v[0]);
}

TEST_CASE("the zero estimation error set is invariant for both observers") {
  Example1 ex = builtin_example1();
  const double tol = 1e-9;
  for (const ObserverModel& m : {ex.reference, spec_observer(ex.observer(1.0))}) {
    SimulationTrace tr = simulate(ex.sys, m, v2(0.2, 0.7), v2(0.2, 0.7), 3.0);
    for (std::size_t j = 0; j < tr.size(); ++j)
      CHECK((tr.x[j] - tr.xhat[j]).cwiseAbs().maxCoeff() <= 10 * tol);
    distance_trace(ex.metric, tr);
    for (double d : tr.d) CHECK(d <= 1e-7);
    ConditionReport r = verify_decay(tr, 1.0, std::nullopt, ex.box);
    CHECK(r.verdict == Verdict::pass);
  }
}

TEST_CASE("property: reference observer error bound over random initial pairs") {
  Example1 ex = builtin_example1();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 20; ++k) {
    Vec x0 = v2(u(rng), u(rng)), xh0 = v2(u(rng), u(rng));
    SimulationTrace tr = simulate(ex.sys, ex.reference, x0, xh0, 5.0, {1e-9, 0.05, std::nullopt});
    const double scale = 3 * (1 + x0(0) * x0(0)) * (x0 - xh0).squaredNorm() * (1 + 1e-3);
    for (std::size_t j = 0; j < tr.size(); ++j)
      CHECK((tr.x[j] - tr.xhat[j]).squaredNorm() <= scale * std::exp(-tr.t[j]));
  }
}

TEST_CASE("simulate: static output injection converges monotonically") {
  DynamicalSystem sys(2, {px("0"), px("0")}, {px("x1")});
  ObserverSpec s{MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -5, 5)), sys, 1.0, {}};
  SimulationTrace tr = simulate(sys, spec_observer(s), v2(1, 0), v2(0, 0.5), 2.0);
  for (std::size_t j = 0; j < tr.size(); ++j) {
    CHECK(tr.xhat[j](0) == doctest::Approx(1 - std::exp(-2 * tr.t[j])).epsilon(1e-8));
    CHECK(tr.xhat[j](1) == 0.5);
  }
  for (std::size_t j = 1; j < tr.size(); ++j) CHECK(tr.xhat[j](0) > tr.xhat[j - 1](0));

  distance_trace(s.metric, tr);
  for (std::size_t j = 0; j < tr.size(); ++j)
    CHECK(tr.d[j] == doctest::Approx((tr.x[j] - tr.xhat[j]).norm()).epsilon(1e-7));
}

TEST_CASE("simulate raises DomainExit with the exit time") {
  DynamicalSystem sys(2, {px("1"), px("0")}, {px("x1")});
  ObserverSpec s{MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -5, 5)), sys, 1.0, {}};
  SimOptions o;
  o.box = Box::cube(2, -1, 1);
  try {
    simulate(sys, spec_observer(s), v2(0, 0), v2(0, 0), 3.0, o);
    FAIL("expected DomainExit");
  } catch (const DomainExit& e) {
    CHECK(e.time() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("distance_trace: constant channel for static states, flags outside the domain") {
  DynamicalSystem sys(2, {px("0"), px("0")}, {px("0*x1")});
  ObserverSpec s{MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -1, 1)), sys, 1.0, {}};
  SimulationTrace tr = simulate(sys, spec_observer(s), v2(0, 0), v2(0.3, 0.4), 0.5);
  distance_trace(s.metric, tr);
  for (double d : tr.d) CHECK(d == doctest::Approx(0.5).epsilon(1e-9));

  SimulationTrace out = simulate(sys, spec_observer(s), v2(0, 0), v2(3, 0), 0.1);
  distance_trace(s.metric, out);
  CHECK(std::isnan(out.d.front()));
  CHECK(flag_string(out.flags.front()) == "outside_domain");
  CHECK(flag_string(kFlagBvpFailure | kFlagOutsideDomain) == "bvp_failure;outside_domain");
}

TEST_CASE("gradient observer: distance traces agree with the closed form") {
  Example1 ex = builtin_example1();
  ObserverSpec s = ex.observer(1.0);
  s.metric = ex.distance_metric;
  SimulationTrace tr = simulate(ex.sys, spec_observer(s), v2(0, 0.5), v2(0.5, 0), 2.0, {1e-9, 0.1, std::nullopt});
  distance_trace(ex.distance_metric, tr);
  for (std::size_t j = 0; j < tr.size(); ++j)
    CHECK(std::abs(tr.d[j] - ex.distance_oracle(tr.xhat[j], tr.x[j])) <= 1e-5);
}

TEST_CASE("verify_decay: example run, gain scaling and the open-loop failure") {
  Example1 ex = builtin_example1();
  const double q = 0.4;
  for (double k : {1.0, 2.0, 4.0}) {
    SimulationTrace tr = simulate(ex.sys, spec_observer(ex.observer(k)), v2(0, 0.5), v2(0.5, 0), 4.0);
    distance_trace(ex.metric, tr);
    ConditionReport r = verify_decay(tr, q, std::nullopt, ex.box);
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.grid_size > 0);
  }
  SimulationTrace open = simulate(ex.sys, spec_observer(ex.observer(0.0)), v2(0, 0.5), v2(0.5, 0), 4.0);
  distance_trace(ex.metric, open);
  ConditionReport r = verify_decay(open, q, std::nullopt, ex.box);
  CHECK(r.verdict == Verdict::fail);
  CHECK(r.witness_time.has_value());
  CHECK_THROWS_AS(verify_decay(open, 0.0, std::nullopt, ex.box), ValidationError);
}

TEST_CASE("scan_gain reports the smallest passing gain") {
  Example1 ex = builtin_example1();
  ScanSetup setup;
  setup.x0 = v2(0, 0.5);
  setup.xhat0 = v2(0.5, 0);
  setup.T = 4.0;
  setup.q = 0.4;
  setup.sim.dt = 0.02;
  GainScan scan = scan_gain(ex.observer(1.0), setup);
  REQUIRE(scan.k_min);
  CHECK(*scan.k_min == 1.0);
  CHECK(scan.tried.size() == 1);
}

TEST_CASE("the gradient observer is the same in both charts") {
  Example1 ex = builtin_example1();
  MetricField pbar = transform_metric(ex.metric, ex.diffeo, Box::cube(2, -30, 30));
  DynamicalSystem sbar = transform_system(ex.sys, ex.diffeo);
  ObserverSpec in_x = ex.observer(2.0);
  ObserverSpec in_bar{pbar, sbar, 2.0, {}};
  Vec x0 = v2(0, 0.5), xh0 = v2(0.5, 0);
  SimulationTrace a = simulate(ex.sys, spec_observer(in_x), x0, xh0, 4.0);
  SimulationTrace b = simulate(sbar, spec_observer(in_bar), ex.diffeo.forward(x0),
                               ex.diffeo.forward(xh0), 4.0);
  REQUIRE(a.size() == b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    CHECK((ex.diffeo.inverse(b.xhat[j]) - a.xhat[j]).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((ex.diffeo.inverse(b.x[j]) - a.x[j]).cwiseAbs().maxCoeff() <= 1e-6);
  }
}
