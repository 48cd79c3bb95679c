#pragma once

// Grid-based checks of the metric inequalities an observer design relies on.
// Each check evaluates independent per-point kernels through parallel_map and
// reduces them serially: worst residual first, ties resolved by the
// lexicographically smaller grid point (grid order).

#include "riemobs/domain.hpp"
#include "riemobs/exec.hpp"
#include "riemobs/geodesic.hpp"
#include "riemobs/metric.hpp"
#include "riemobs/report.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace riemobs {

/// Singular values of dh/dx below this fraction of the largest count as zero.
inline constexpr double kRankRelTol = 1e-10;

/// Orthonormal basis (columns) of ker dh/dx(x); `rank` receives the numerical rank.
Mat kernel_basis(const DynamicalSystem& sys, const Vec& x, int* rank = nullptr);

/// lambda_max(B^T L_f P B) <= tol at every grid point, B = kernel_basis.
ConditionReport check_conditional_negativity(const MetricField& p, const DynamicalSystem& sys,
                                             const Grid& grid, double tol = 1e-9,
                                             Exec exec = Exec::parallel);

/// Per-node values on a grid, interpolated multilinearly and clamped to the box.
class RhoTable {
 public:
  RhoTable() = default;
  RhoTable(Grid grid, std::vector<double> values);

  const Grid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double operator()(const Vec& x) const;
  bool covers(const Vec& x) const { return grid_.box().contains(x); }
  double max() const;

 private:
  Grid grid_{Box::cube(1, 0, 1), 2};
  std::vector<double> values_;
};

struct FitOptions {
  double rho_max = 1e6;
  double rel_tol = 1e-6;
  double q_cap = 1e6;
  Exec exec = Exec::parallel;
};

struct RhoFit {
  RhoTable rho;            // built for q_target
  double q_target = 0.0;
  double q_achieved = 0.0; // largest q with an admissible rho <= rho_max everywhere
  ConditionReport report;
};

/// Smallest rho(x) >= 0 with lambda_max(L_f P - rho dh^T dh + q P) <= 0 per grid
/// point, by bisection. Without q_target the table is built at q_achieved / 2.
/// Throws Infeasible when even rho_max fails at q = 0.
RhoFit fit_rho_q(const MetricField& p, const DynamicalSystem& sys, const Grid& grid,
                 std::optional<double> q_target = std::nullopt, const FitOptions& opts = {});

/// lambda_max(L_f P - rho(x) dh^T dh + q P) <= tol on the grid.
ConditionReport check_h2(const MetricField& p, const DynamicalSystem& sys, const RhoTable& rho,
                         double q, const Grid& grid, double tol = 1e-9,
                         Exec exec = Exec::parallel);

/// max_j || B^T Q_j B ||_2 <= tol with Q_j = d2h_j - sum_i dh_j/dx_i Gamma^i.
ConditionReport check_totally_geodesic(const MetricField& p, const DynamicalSystem& sys,
                                       const Grid& grid, double tol = 1e-8,
                                       Exec exec = Exec::parallel);

using PointPair = std::pair<Vec, Vec>;

/// For every pair on the level set h = y, the minimal geodesic must stay on it.
ConditionReport check_geodesic_convexity_spot(const MetricField& p, const DynamicalSystem& sys,
                                              const Vec& y, const std::vector<PointPair>& pairs,
                                              double tol = 1e-6,
                                              const ShootingOptions& shooting = {},
                                              Exec exec = Exec::parallel);

/// Random pairs projected onto the level set h = y inside the box.
std::vector<PointPair> sample_level_set_pairs(const DynamicalSystem& sys, const Vec& y,
                                              const Box& box, int count, std::uint64_t seed);

/// Observer right-hand side F(xhat, y).
using ObserverField = std::function<Vec(const Vec& xhat, const Vec& y)>;

/// gamma'(s)^T P(gamma(s)) [F(gamma(s), h(gamma(0))) - f(gamma(s))] < 0 on the
/// interior samples of the minimal geodesic from x = gamma(0) to xhat.
ConditionReport check_gain_margin(const MetricField& p, const DynamicalSystem& sys,
                                  const ObserverField& observer, const Vec& x, const Vec& xhat,
                                  const ShootingOptions& shooting = {});

}  // namespace riemobs
