#pragma once

// Explicit Runge-Kutta 5(4) of Dormand and Prince with step-size control and
// the usual fourth-order continuous extension for output between steps.

#include "riemobs/linalg.hpp"

#include <functional>
#include <span>
#include <vector>

namespace riemobs {

using OdeRhs = std::function<void(double t, const Vec& y, Vec& dy)>;

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-9;
  double initial_step = 0.0;  // 0 selects one automatically
  double min_step = 1e-13;    // relative to the span, below this the step underflows
  std::size_t max_steps = 2'000'000;
};

/// One accepted step with its interpolant.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  Vec y0, y1;
  Vec r2, r3, r4, r5;

  Vec at(double t) const;
};

enum class OdeStatus { ok, step_underflow, stopped, too_many_steps };

struct OdeResult {
  OdeStatus status = OdeStatus::ok;
  double t_last = 0.0;
  Vec y_last;
  std::vector<double> t_out;  // the requested output times that were reached
  std::vector<Vec> y_out;
  std::vector<DenseStep> steps;  // only filled when requested
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Return false to stop the integration after an accepted step.
using StepGuard = std::function<bool(double t, const Vec& y)>;

/// Integrate y' = rhs(t, y) from t0 to t_end (> t0). Output times must be
/// sorted and inside [t0, t_end].
OdeResult integrate(const OdeRhs& rhs, double t0, const Vec& y0, double t_end,
                    const OdeOptions& opts, std::span<const double> outputs = {},
                    const StepGuard& guard = nullptr, bool keep_steps = false);

/// t0, t0 + dt, ..., ending exactly at t_end (the last gap may be shorter).
std::vector<double> uniform_times(double t0, double t_end, double dt);

}  // namespace riemobs
