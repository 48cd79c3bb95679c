#include "doctest.h"

#include "riemobs/errors.hpp"
#include "riemobs/metric.hpp"

#include <cmath>
#include <random>

using namespace riemobs;

namespace {

const std::vector<std::string> kVars{"x1", "x2"};

Expr px(const char* s) { return parse(s, kVars); }

MetricField metric2(const char* p11, const char* p12, const char* p22, double box = 5.0) {
  return MetricField(2, {px(p11), px(p12), px(p22)}, Box::cube(2, -box, box));
}

MetricField example_metric() { return metric2("2+x2^2", "x1*x2-1", "1+x1^2"); }

MetricField flat_chart_metric() {
  return metric2("1 - x1*x2/sqrt(1+x1^2) + x1^2*x2^2/(1+x1^2)", "-sqrt(1+x1^2)/2 + x1*x2",
                 "1+x1^2");
}

DynamicalSystem example_system() {
  return DynamicalSystem(2, {px("x2*sqrt(1+x1^2)"), px("-(x1/sqrt(1+x1^2))*x2^2")}, {px("x1")});
}

Diffeomorphism example_phi() {
  return {{px("x1"), px("x2*sqrt(1+x1^2)")}, {px("x1"), px("x2/sqrt(1+x1^2)")}};
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("eval_metric") {
  Mat p = eval_metric(example_metric(), v2(0, 0));
  CHECK(p(0, 0) == 2.0);
  CHECK(p(0, 1) == -1.0);
  CHECK(p(1, 0) == -1.0);
  CHECK(p(1, 1) == 1.0);
  Mat q = eval_metric(example_metric(), v2(1, 1));
  CHECK(q(0, 0) == 3.0);
  CHECK(q(0, 1) == 0.0);
  CHECK(q(1, 1) == 2.0);
  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -1, 1));
  CHECK(eval_metric(id, v2(0.3, 7)).isIdentity(0.0));
}

TEST_CASE("eval_metric rejects indefinite matrices") {
  MetricField bad = metric2("1", "x1", "1");
  CHECK_NOTHROW(eval_metric(bad, v2(0.5, 0)));
  try {
    eval_metric(bad, v2(2, 0));
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.lambda_min() == doctest::Approx(-1.0));
    CHECK(e.point()[0] == 2.0);
  }
}

TEST_CASE("metric_partials") {
  MetricField c = MetricField::constant(Mat::Identity(2, 2) * 3, Box::cube(2, -1, 1));
  Tensor3 z = metric_partials(c, v2(0.1, 0.2));
  for (int m = 0; m < 2; ++m) CHECK(z.slice(m).isZero(0.0));
  CHECK(metric_partials(example_metric(), v2(0, 3)).at(1, 0, 0) == 6.0);
  CHECK(metric_partials(example_metric(), v2(2, 0)).at(0, 1, 1) == 4.0);
  Tensor3 d = metric_partials(example_metric(), v2(0.4, -1.3));
  for (int m = 0; m < 2; ++m) CHECK(d.at(m, 0, 1) == d.at(m, 1, 0));
  CHECK(d.at(0, 0, 1) == -1.3);  // d(x1 x2 - 1)/dx1
}

TEST_CASE("christoffel") {
  MetricField c = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -1, 1));
  Tensor3 g0 = christoffel(c, v2(0.5, 0.5));
  for (int i = 0; i < 2; ++i) CHECK(g0.slice(i).isZero(0.0));

  Grid grid(Box::cube(2, -3, 3), 41);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    worst = std::max(worst, std::abs(christoffel(example_metric(), grid.point(k)).at(0, 1, 1)));
  CHECK(worst <= 1e-10);

  std::vector<std::string> x{"x1"};
  MetricField exp1(1, {parse("exp(2*x1)", x)}, Box::cube(1, -3, 3));
  for (double t : {-2.0, 0.0, 0.7, 2.5}) {
    Vec p(1);
    p << t;
    CHECK(christoffel(exp1, p).at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("christoffel matches closed form for diag(1, 1+x1^2)") {
  MetricField d = metric2("1", "0", "1+x1^2");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 50; ++k) {
    Vec x = v2(u(rng), u(rng));
    Tensor3 g = christoffel(d, x);
    CHECK(g.at(0, 1, 1) == doctest::Approx(-x(0)).epsilon(1e-14));
    CHECK(g.at(1, 0, 1) == doctest::Approx(x(0) / (1 + x(0) * x(0))).epsilon(1e-14));
    CHECK(g.at(0, 0, 0) == 0.0);
    CHECK(g.at(1, 1, 1) == 0.0);
  }
}

TEST_CASE("property: christoffel symmetric in lower indices") {
  MetricField p = metric2("2+sin(x1*x2)^2", "0.3*cos(x1)", "1+exp(x2)");
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 100; ++k) {
    Tensor3 g = christoffel(p, v2(u(rng), u(rng)));
    for (int i = 0; i < 2; ++i) CHECK(std::abs(g.at(i, 0, 1) - g.at(i, 1, 0)) <= 1e-12);
  }
}

TEST_CASE("lie_derivative") {
  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -1, 1));
  DynamicalSystem lin(2, {px("x2"), px("0")}, {px("x1")});
  Mat l = lie_derivative(id, lin, v2(0.3, 0.2));
  CHECK(l(0, 0) == 0.0);
  CHECK(l(0, 1) == 1.0);
  CHECK(l(1, 0) == 1.0);
  CHECK(l(1, 1) == 0.0);

  DynamicalSystem zero(2, {px("0"), px("0")}, {px("x1")});
  CHECK(lie_derivative(example_metric(), zero, v2(1.2, -0.4)).isZero(0.0));

  // Constant [[p,q],[q,r]] on the example system, direction e2.
  const double p = 1.0, q = 0.5, r = 1.0;
  Mat cm(2, 2);
  cm << p, q, q, r;
  MetricField c = MetricField::constant(cm, Box::cube(2, -5, 5));
  CHECK(lie_derivative(c, example_system(), v2(0, 0))(1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  for (Vec x : {v2(1, 2), v2(-0.5, 0.3), v2(2, -1)}) {
    double s = std::sqrt(1 + x(0) * x(0));
    double expect = (2 * q * (1 + x(0) * x(0)) - 4 * r * x(0) * x(1)) / s;
    CHECK(lie_derivative(c, example_system(), x)(1, 1) == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("property: lie_derivative matches the flow quotient with r = 1e-5") {
  // Symmetric quotient (g(r) - g(-r)) / 2r of g(t) = (dX v)^T P(X) (dX v), with
  // the flow X and its variation dX v advanced by one RK4 step of size t.
  // Only metric values are used, never its partial derivatives.
  MetricField p = example_metric();
  DynamicalSystem sys = example_system();
  auto flow = [&](const Vec& x, const Vec& v, double t) {
    auto rhs = [&](const Vec& z) {
      Vec dz(4);
      dz << sys.f(z.head(2)), sys.jacobian_f(z.head(2)) * z.tail(2);
      return dz;
    };
    Vec z(4);
    z << x, v;
    Vec k1 = rhs(z), k2 = rhs(z + 0.5 * t * k1), k3 = rhs(z + 0.5 * t * k2), k4 = rhs(z + t * k3);
    z += t / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    return z;
  };
  auto g = [&](const Vec& x, const Vec& v, double t) {
    Vec z = flow(x, v, t);
    Vec w = z.tail(2);
    return w.dot(p.value(z.head(2)) * w);
  };
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 50; ++k) {
    Vec x = v2(u(rng), u(rng));
    Vec v = v2(u(rng), u(rng));
    const double r = 1e-5;
    double quotient = (g(x, v, r) - g(x, v, -r)) / (2 * r);
    double exact = v.dot(lie_derivative(p, sys, x) * v);
    CHECK(std::abs(quotient - exact) <= 1e-4 * std::max(1.0, std::abs(exact)));
  }
}

TEST_CASE("pushforward_metric") {
  MetricField p = example_metric();
  std::vector<Expr> ident{px("x1"), px("x2")};
  Vec x = v2(0.7, -1.1);
  CHECK((pushforward_metric(p, ident, x) - eval_metric(p, x)).norm() == 0.0);

  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -1, 1));
  std::vector<Expr> twice{px("2*x1"), px("2*x2")};
  CHECK((pushforward_metric(id, twice, x) - 0.25 * Mat::Identity(2, 2)).norm() <= 1e-15);

  Mat flat(2, 2);
  flat << 1, -0.5, -0.5, 1;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 20; ++k) {
    Vec y = v2(u(rng), u(rng));
    CHECK((pushforward_metric(flat_chart_metric(), example_phi().phi, y) - flat).norm() <= 1e-12);
  }

  std::vector<Expr> collapse{px("x1"), px("x1")};
  CHECK_THROWS_AS(pushforward_metric(p, collapse, x), SingularJacobian);
}

TEST_CASE("property: pushforward then pullback returns P(x)") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2, 2);
  auto phi = example_phi();
  for (int k = 0; k < 50; ++k) {
    Vec x = v2(u(rng), u(rng));
    Mat pbar = pushforward_metric(example_metric(), phi.phi, x);
    Mat j = phi.jacobian(x);
    CHECK((j.transpose() * pbar * j - eval_metric(example_metric(), x)).norm() <= 1e-10);
  }
}

TEST_CASE("transform_metric and transform_system agree with pointwise formulas") {
  auto phi = example_phi();
  MetricField bar = transform_metric(example_metric(), phi, Box::cube(2, -5, 5));
  DynamicalSystem sbar = transform_system(example_system(), phi);
  // Known closed form of the example metric in the flat chart.
  MetricField closed =
      metric2("1 + (x2/(1+x1^2) + x1/sqrt(1+x1^2))^2 + 1/(1+x1^2)", "-1/sqrt(1+x1^2)", "1");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 30; ++k) {
    Vec x = v2(u(rng), u(rng));
    Vec xb = phi.forward(x);
    CHECK((bar.value(xb) - pushforward_metric(example_metric(), phi.phi, x)).norm() <= 1e-12);
    CHECK((bar.value(xb) - closed.value(xb)).norm() <= 1e-12);
    CHECK((phi.inverse(xb) - x).norm() <= 1e-14);
    // f in the flat chart is (xbar2, 0), h is xbar1.
    Vec fb = sbar.f(xb);
    CHECK(fb(0) == doctest::Approx(xb(1)).epsilon(1e-13));
    CHECK(std::abs(fb(1)) <= 1e-13);
    CHECK(sbar.h(xb)(0) == doctest::Approx(x(0)));
    // Derivatives of the transformed field agree with the closed form too.
    Tensor3 d1 = metric_partials(bar, xb), d2 = metric_partials(closed, xb);
    for (int m = 0; m < 2; ++m) CHECK((d1.slice(m) - d2.slice(m)).norm() <= 1e-11);
  }
}

TEST_CASE("eigenvalue bounds of the example metric on [-3,3]^2") {
  Grid grid(Box::cube(2, -3, 3), 41);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    Vec x = grid.point(k);
    Vec ev = sym_eigenvalues(eval_metric(example_metric(), x));
    CHECK(ev.minCoeff() >= 1.0 / 3.0 - 1e-12);
    CHECK(ev.maxCoeff() <= 3 + x.squaredNorm() + 1e-12);
  }
}

TEST_CASE("completeness_probe") {
  std::vector<double> radii{1, 2, 4, 8, 16};
  MetricField id = MetricField::constant(Mat::Identity(2, 2), Box::cube(2, -20, 20));
  auto a = completeness_probe(id, radii);
  CHECK(a.report.verdict == Verdict::pass);
  for (const auto& row : a.rows) {
    CHECK(row.p_min == doctest::Approx(1.0));
    CHECK(row.growth == doctest::Approx(row.radius * row.radius));
  }

  auto b = completeness_probe(example_metric(), radii);
  for (const auto& row : b.rows) CHECK(row.p_min >= 1.0 / 3.0);
  CHECK(b.report.verdict == Verdict::pass);

  MetricField shrinking = metric2("1/(1+x1^2)^2", "0", "1");
  auto c = completeness_probe(shrinking, radii);
  CHECK(c.report.verdict != Verdict::pass);
  // Brute-force oracle: on the axis the smallest eigenvalue is 1/(1+r^2)^2.
  for (const auto& row : c.rows) {
    double on_axis = 1.0 / std::pow(1 + row.radius * row.radius, 2);
    CHECK(row.p_min >= on_axis);
    CHECK(row.p_min <= 1.5 * on_axis);
  }

  CHECK_THROWS_AS(completeness_probe(metric2("1", "x1", "1"), radii), NotPositiveDefinite);
  CHECK_THROWS_AS(completeness_probe(id, std::vector<double>{2, 1}), ValidationError);
}

TEST_CASE("completeness_probe: parallel kernel matches the serial reference") {
  std::vector<double> radii{0.5, 1.5, 3};
  CompletenessOptions s, p;
  s.exec = Exec::serial;
  p.exec = Exec::parallel;
  s.seed = p.seed = 17;
  auto a = completeness_probe(example_metric(), radii, s);
  auto b = completeness_probe(example_metric(), radii, p);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].p_min == b.rows[i].p_min);
  CHECK(a.report.witness_point == b.report.witness_point);
}
