#pragma once

#include "riemobs/conditions.hpp"
#include "riemobs/exec.hpp"
#include "riemobs/metric.hpp"
#include "riemobs/report.hpp"

#include <functional>
#include <vector>

namespace riemobs {

/// The system linearized along one trajectory X(x0, t), sampled on a time grid.
struct TrajectoryLinearization {
  DynamicalSystem sys;
  MetricField metric;
  Vec x0;
  std::vector<double> t;
  std::vector<Vec> x;
  std::vector<Mat> a;   // df/dx at X(t_j)
  std::vector<Mat> c;   // dh/dx at X(t_j)
  std::vector<Mat> pi;  // P(X(t_j))
  double p_lower = 0.0; // smallest eigenvalue of Pi seen on the grid
  double p_upper = 0.0; // largest
};

/// Integrates X' = f(X) from x0 over [0, T] with tolerance `tol` and samples
/// every dt. Throws IntegrationFailure when the solution blows up.
TrajectoryLinearization linearize_along(const DynamicalSystem& sys, const MetricField& p,
                                        const Vec& x0, double T, double dt = 0.01,
                                        double tol = 1e-9);

using RhoFunction = std::function<double(const Vec&)>;

/// K(t_j) = rho(X(t_j)) / 2 * Pi(t_j)^-1 C(t_j)^T together with the rho used.
struct GainSchedule {
  RhoFunction rho;
  std::vector<double> rho_values;
  std::vector<Mat> k;
  double sup_norm = 0.0;                  // max_j ||K(t_j)||_2
  std::vector<double> extrapolated_times; // X(t_j) outside the rho table
};

GainSchedule detect_gain(const TrajectoryLinearization& lin, RhoFunction rho);
GainSchedule detect_gain(const TrajectoryLinearization& lin, const RhoTable& table);

struct LtvOptions {
  double tol = 1e-6;      // relative slack on the exponential envelope
  double ode_tol = 1e-9;
  Exec exec = Exec::parallel;
};

/// Unit coordinate vectors, their negatives, and the normalized all-ones vector.
std::vector<Vec> standard_initial_set(int n);

/// Integrates xi' = (A - K C) xi for each initial xi jointly with the
/// trajectory, and requires xi^T Pi xi <= V(0) exp(-q t / 2) (1 + tol) on the
/// time grid. `v_traces`, when given, receives V on the grid per initial xi.
ConditionReport check_ltv_stability(const TrajectoryLinearization& lin, const GainSchedule& gain,
                                    double q, const std::vector<Vec>& xi0,
                                    const LtvOptions& opts = {},
                                    std::vector<std::vector<double>>* v_traces = nullptr);

}  // namespace riemobs
