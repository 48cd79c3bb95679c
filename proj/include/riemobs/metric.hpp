#pragma once

// Riemannian metric fields P(x) on R^n, the dynamical system they are paired
// with, and the pointwise differential geometry the checkers need: partial
// derivatives, Christoffel symbols, Lie derivative along f, pushforward under
// a change of coordinates, and a sampled completeness probe.

#include "riemobs/domain.hpp"
#include "riemobs/exec.hpp"
#include "riemobs/expr.hpp"
#include "riemobs/linalg.hpp"
#include "riemobs/report.hpp"

#include <cstdint>
#include <vector>

namespace riemobs {

/// Dense n x n x n array, at(i, k, l).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n, 0.0) {}

  int dim() const { return n_; }
  double& at(int i, int k, int l) { return data_[(static_cast<std::size_t>(i) * n_ + k) * n_ + l]; }
  double at(int i, int k, int l) const {
    return data_[(static_cast<std::size_t>(i) * n_ + k) * n_ + l];
  }
  /// The n x n matrix obtained by fixing the first index.
  Mat slice(int i) const;

 private:
  int n_ = 0;
  std::vector<double> data_;
};

class MetricField {
 public:
  MetricField() = default;
  /// `upper` lists entries (i, j), i <= j, row by row; the lower triangle mirrors it.
  MetricField(int n, std::vector<Expr> upper, Box domain);
  /// Uses the upper triangle of a full n x n grid of expressions.
  static MetricField from_matrix(const std::vector<std::vector<Expr>>& entries, Box domain);
  static MetricField constant(const Mat& p, Box domain);

  int dim() const { return n_; }
  const Box& domain() const { return domain_; }
  const Expr& entry(int i, int j) const;

  /// Symmetric matrix without the positivity check.
  Mat value(const Vec& x) const;
  /// P(x) together with D[m](k, l) = dP_kl/dx_m.
  void value_and_partials(const Vec& x, Mat& p, Tensor3& d) const;

 private:
  int upper_index(int i, int j) const;

  int n_ = 0;
  ExprSet entries_;
  Box domain_;
};

class DynamicalSystem {
 public:
  DynamicalSystem() = default;
  DynamicalSystem(int n, std::vector<Expr> f, std::vector<Expr> h);

  int dim() const { return n_; }
  int outputs() const { return m_; }
  const ExprSet& f_exprs() const { return f_; }
  const ExprSet& h_exprs() const { return h_; }

  Vec f(const Vec& x) const;
  Mat jacobian_f(const Vec& x) const;  // n x n
  Vec h(const Vec& x) const;
  Mat jacobian_h(const Vec& x) const;  // m x n
  /// Hessian of each output component.
  std::vector<Mat> hessians_h(const Vec& x) const;

 private:
  int n_ = 0;
  int m_ = 0;
  ExprSet f_;
  ExprSet h_;
};

/// Change of coordinates xbar = phi(x) with inverse x = psi(xbar).
struct Diffeomorphism {
  std::vector<Expr> phi;
  std::vector<Expr> psi;

  Vec forward(const Vec& x) const;
  Vec inverse(const Vec& xbar) const;
  Mat jacobian(const Vec& x) const;  // dphi/dx
};

/// SPD tolerance: lambda_min > kSpdRelTol * max(1, lambda_max).
inline constexpr double kSpdRelTol = 1e-12;

Mat eval_metric(const MetricField& p, const Vec& x);
Tensor3 metric_partials(const MetricField& p, const Vec& x);
/// Gamma(i, k, l), symmetric in (k, l).
Tensor3 christoffel(const MetricField& p, const Vec& x);
/// sum_m D[m] f_m + P df/dx + (df/dx)^T P
Mat lie_derivative(const MetricField& p, const DynamicalSystem& sys, const Vec& x);
/// Pbar at phi(x) with P(x) = J^T Pbar J, J = dphi/dx(x).
Mat pushforward_metric(const MetricField& p, std::span<const Expr> phi, const Vec& x);

/// The metric and system written in xbar = phi(x) coordinates, built
/// symbolically so their derivatives still come from autodiff.
MetricField transform_metric(const MetricField& p, const Diffeomorphism& d, Box new_domain);
DynamicalSystem transform_system(const DynamicalSystem& sys, const Diffeomorphism& d);

struct CompletenessRow {
  double radius = 0.0;
  double p_min = 0.0;  // sampled min of lambda_min(P) over the ball
  double growth = 0.0; // radius^2 * p_min
};

struct CompletenessOptions {
  int samples = 2000;
  double threshold = 10.0;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;
};

/// Sampled evidence for the growth condition on r^2 * p_min(r); this is not a
/// certificate. Verdict pass when the growth column is strictly increasing and
/// ends above the threshold, inconclusive otherwise.
struct CompletenessProbe {
  std::vector<CompletenessRow> rows;
  ConditionReport report;
};

CompletenessProbe completeness_probe(const MetricField& p, std::span<const double> radii,
                                     const CompletenessOptions& opts = {});

/// Low-discrepancy points uniform in the ball of radius r centred at 0.
std::vector<Vec> ball_samples(int n, double r, int count, std::uint64_t seed);

}  // namespace riemobs
