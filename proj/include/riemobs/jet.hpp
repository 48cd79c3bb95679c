#pragma once

// Forward-mode jets: value plus gradient (Jet1) or plus gradient and Hessian
// (Jet2), with respect to the n state variables. Storage is bounded by kMaxDim
// so that evaluation never touches the heap.

#include "riemobs/linalg.hpp"

#include <cmath>

namespace riemobs {

using JetVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using JetMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

struct Jet1 {
  double v = 0.0;
  JetVec g;

  static Jet1 constant(double c, int n) { return {c, JetVec::Zero(n)}; }
  static Jet1 variable(double x, int i, int n) {
    Jet1 j{x, JetVec::Zero(n)};
    j.g(i) = 1.0;
    return j;
  }
};

struct Jet2 {
  double v = 0.0;
  JetVec g;
  JetMat h;

  static Jet2 constant(double c, int n) { return {c, JetVec::Zero(n), JetMat::Zero(n, n)}; }
  static Jet2 variable(double x, int i, int n) {
    Jet2 j{x, JetVec::Zero(n), JetMat::Zero(n, n)};
    j.g(i) = 1.0;
    return j;
  }
};

// Scalar chain rule: result = phi(a) given phi(a.v), phi'(a.v), phi''(a.v).
inline double chain(double, double f0, double, double) { return f0; }

inline Jet1 chain(const Jet1& a, double f0, double f1, double) { return {f0, f1 * a.g}; }

inline Jet2 chain(const Jet2& a, double f0, double f1, double f2) {
  Jet2 r{f0, f1 * a.g, f1 * a.h};
  r.h.noalias() += f2 * (a.g * a.g.transpose());
  return r;
}

inline double value_of(double a) { return a; }
inline double value_of(const Jet1& a) { return a.v; }
inline double value_of(const Jet2& a) { return a.v; }

inline Jet1 operator+(const Jet1& a, const Jet1& b) { return {a.v + b.v, a.g + b.g}; }
inline Jet1 operator-(const Jet1& a, const Jet1& b) { return {a.v - b.v, a.g - b.g}; }
inline Jet1 operator-(const Jet1& a) { return {-a.v, -a.g}; }
inline Jet1 operator*(const Jet1& a, const Jet1& b) { return {a.v * b.v, b.v * a.g + a.v * b.g}; }

inline Jet2 operator+(const Jet2& a, const Jet2& b) { return {a.v + b.v, a.g + b.g, a.h + b.h}; }
inline Jet2 operator-(const Jet2& a, const Jet2& b) { return {a.v - b.v, a.g - b.g, a.h - b.h}; }
inline Jet2 operator-(const Jet2& a) { return {-a.v, -a.g, -a.h}; }
inline Jet2 operator*(const Jet2& a, const Jet2& b) {
  Jet2 r{a.v * b.v, b.v * a.g + a.v * b.g, b.v * a.h + a.v * b.h};
  r.h.noalias() += a.g * b.g.transpose();
  r.h.noalias() += b.g * a.g.transpose();
  return r;
}

}  // namespace riemobs
