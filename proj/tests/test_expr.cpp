#include "doctest.h"

#include "riemobs/errors.hpp"
#include "riemobs/expr.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

using namespace riemobs;

namespace {

const std::vector<std::string> kX12{"x1", "x2"};

double ev(const std::string& text, std::vector<double> p, const std::vector<std::string>& vars = kX12) {
  return eval(parse(text, vars), p);
}

// Random polynomial of total degree <= 4 in three variables, as source text.
std::string random_polynomial(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_int_distribution<int> deg(0, 4);
  std::string s = "0";
  for (int term = 0; term < 6; ++term) {
    int budget = deg(rng);
    s += " + " + std::to_string(coef(rng));
    for (int v = 1; v <= 3 && budget > 0; ++v) {
      int p = std::uniform_int_distribution<int>(0, budget)(rng);
      budget -= p;
      if (p > 0) s += "*x" + std::to_string(v) + "^" + std::to_string(p);
    }
  }
  return s;
}

}  // namespace

TEST_CASE("parse follows the usual precedence") {
  CHECK(ev("x2*sqrt(1+x1^2)", {0, 1}) == 1.0);
  CHECK(ev("-(x1/sqrt(1+x1^2))*x2^2", {1, 2}) == doctest::Approx(-4.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(ev("-x1^2", {3, 0}) == -9.0);
  CHECK(ev("2^3^2", {0, 0}) == 64.0);  // left-associative
  CHECK(ev("1-2-3", {0, 0}) == -4.0);
  CHECK(ev("8/4/2", {0, 0}) == 1.0);
  CHECK(ev("2*x1^-1", {4, 0}) == 0.5);
  CHECK(ev("1.5e1 + .5", {0, 0}) == 15.5);
}

TEST_CASE("parse reports malformed input with an offset") {
  try {
    parse("x1+ x2)", kX12);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 6);
  }
  CHECK_THROWS_AS(parse("x1+", kX12), ParseError);
  CHECK_THROWS_AS(parse("(x1", kX12), ParseError);
  CHECK_THROWS_AS(parse("sqrt x1", kX12), ParseError);
  try {
    parse("x3+1", kX12);
    FAIL("expected unknown identifier");
  } catch (const UnknownIdentifier& e) {
    CHECK(e.name() == "x3");
  }
}

TEST_CASE("eval") {
  CHECK(ev("x1", {3, 5}) == 3.0);
  CHECK(ev("sqrt(1+x1^2)", {0, 0}) == 1.0);
  CHECK(ev("2+x2^2", {0, 2}) == 6.0);
  CHECK(ev("abs(x1)*exp(0)*cos(0)+sin(0)+log(1)", {-2, 0}) == 2.0);
}

TEST_CASE("eval reports domain errors with the sub-expression") {
  CHECK_THROWS_AS(ev("sqrt(x1)", {-1, 0}), DomainError);
  CHECK_THROWS_AS(ev("log(x1)", {0, 0}), DomainError);
  CHECK_THROWS_AS(ev("1/(x1-x2)", {1, 1}), DomainError);
  CHECK_THROWS_AS(ev("x1^0.5", {-1, 0}), DomainError);
  CHECK(ev("x1^3", {-2, 0}) == -8.0);  // integer exponents take any base
  try {
    ev("x2 + log(x1)", {-1, 0});
    FAIL("expected domain error");
  } catch (const DomainError& e) {
    CHECK(e.subexpression() == "log(x1)");
  }
}

TEST_CASE("grad") {
  std::vector<std::string> x1{"x1"};
  CHECK(grad(parse("x1^2", x1), std::vector<double>{3})(0) == 6.0);
  Vec g = grad(parse("x2*sqrt(1+x1^2)", kX12), std::vector<double>{0, 1});
  CHECK(g(0) == 0.0);
  CHECK(g(1) == 1.0);
  Vec c = grad(parse("3.5", kX12), std::vector<double>{0.3, -1});
  CHECK(c.isZero(0.0));
  CHECK_THROWS_AS(grad(parse("sqrt(x1)", kX12), std::vector<double>{0, 0}), DomainError);
}

TEST_CASE("hessian") {
  Mat h = hessian(parse("x1*x2", kX12), std::vector<double>{0.7, -2.0});
  CHECK(h(0, 0) == 0.0);
  CHECK(h(0, 1) == 1.0);
  CHECK(h(1, 0) == 1.0);
  CHECK(h(1, 1) == 0.0);
  CHECK(hessian(parse("x1", kX12), std::vector<double>{4, 5}).isZero(0.0));
  Mat p = hessian(parse("x1^2+x2^3", kX12), std::vector<double>{1, 2});
  CHECK(p(0, 0) == 2.0);
  CHECK(p(1, 1) == 12.0);
  CHECK(p(0, 1) == 0.0);
}

TEST_CASE("property: gradient matches central differences on random polynomials") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<std::string> vars{"x1", "x2", "x3"};
  for (int trial = 0; trial < 200; ++trial) {
    Expr e = parse(random_polynomial(rng), vars);
    std::vector<double> p{u(rng), u(rng), u(rng)};
    Vec g = grad(e, p);
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-6;
      auto q = p, r = p;
      q[i] += h;
      r[i] -= h;
      double fd = (eval(e, q) - eval(e, r)) / (2 * h);
      CHECK(std::abs(fd - g(i)) <= 1e-6 * std::max(1.0, std::abs(g(i))));
    }
  }
}

TEST_CASE("property: hessian is bitwise symmetric and matches nested symbolic derivatives") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  std::vector<std::string> vars{"x1", "x2", "x3"};
  const char* extras[] = {"sqrt(1+x1^2)*x2", "exp(x1*x2)/(1+x3^2)", "sin(x1)*cos(x2*x3)",
                          "log(1+x1^2+x2^2)*x3", "x1^x2", "abs(x1-3)*x2^2"};
  for (int trial = 0; trial < 60; ++trial) {
    std::string text = random_polynomial(rng) + " + " + extras[trial % 6];
    Expr e = parse(text, vars);
    std::vector<double> p{u(rng), u(rng), u(rng)};
    Mat h = hessian(e, p);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        CHECK(h(i, j) == h(j, i));
        double nested = eval(derivative(derivative(e, i), j), p);
        CHECK(h(i, j) == doctest::Approx(nested).epsilon(1e-11).scale(1.0));
      }
  }
}

TEST_CASE("property: print then parse round-trips evaluation") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<std::string> vars{"x1", "x2", "x3"};
  const char* samples[] = {"-(x1/sqrt(1+x1^2))*x2^2", "2+x3^2-x1*x2/(1+x1^2)", "-x1^-2+x2^0.5",
                           "exp(-x1)*log(x2)+abs(x3-1)", "1e-5*x1 - 3.25e+2"};
  for (const char* s : samples) {
    Expr e = parse(s, vars);
    Expr back = parse(to_string(e, vars), vars);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> p{u(rng), u(rng), u(rng)};
      CHECK(eval(back, p) == eval(e, p));
    }
  }
  for (int trial = 0; trial < 20; ++trial) {
    Expr e = parse(random_polynomial(rng), vars);
    Expr back = parse(to_string(e, vars), vars);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> p{u(rng), u(rng), u(rng)};
      CHECK(eval(back, p) == eval(e, p));
    }
  }
}

TEST_CASE("substitute composes expressions and keeps arity of the replacements") {
  Expr f = parse("x1^2 + x2", kX12);
  std::vector<std::string> t{"t"};
  std::vector<Expr> rep{parse("sin(t)", t), parse("cos(t)^2", t)};
  Expr g = substitute(f, rep);
  CHECK(g.arity() == 1);
  CHECK(eval(g, std::vector<double>{0.3}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(grad(g, std::vector<double>{0.3})(0) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("ExprSet shares sub-expressions across outputs") {
  std::vector<Expr> es{parse("sqrt(1+x1^2)", kX12), parse("x2*sqrt(1+x1^2)", kX12)};
  ExprSet set(es, 2);
  auto v = set.values(std::vector<double>{0, 3});
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 3.0);
  auto j = set.jets2(std::vector<double>{1, 1});
  CHECK(j[1].g(0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK_THROWS_AS(set.values(std::vector<double>{1}), ValidationError);
}
