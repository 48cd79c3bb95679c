#pragma once

#include "riemobs/metric.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fixtures {

using namespace riemobs;

inline const std::vector<std::string> kVars{"x1", "x2"};

inline Expr px(const char* s) { return parse(s, kVars); }

inline MetricField metric2(const char* p11, const char* p12, const char* p22, double box = 5.0) {
  return MetricField(2, {px(p11), px(p12), px(p22)}, Box::cube(2, -box, box));
}

inline MetricField example_metric(double box = 5.0) {
  return metric2("2+x2^2", "x1*x2-1", "1+x1^2", box);
}

inline MetricField flat_chart_metric(double box = 5.0) {
  return metric2("1 - x1*x2/sqrt(1+x1^2) + x1^2*x2^2/(1+x1^2)", "-sqrt(1+x1^2)/2 + x1*x2",
                 "1+x1^2", box);
}

inline DynamicalSystem example_system() {
  return DynamicalSystem(2, {px("x2*sqrt(1+x1^2)"), px("-(x1/sqrt(1+x1^2))*x2^2")}, {px("x1")});
}

inline Diffeomorphism example_phi() {
  return {{px("x1"), px("x2*sqrt(1+x1^2)")}, {px("x1"), px("x2/sqrt(1+x1^2)")}};
}

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace fixtures
