#pragma once

#include "riemobs/domain.hpp"
#include "riemobs/expr.hpp"
#include "riemobs/geodesic.hpp"
#include "riemobs/metric.hpp"
#include "riemobs/report.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace riemobs {

/// Gradient observer xhat' = f(xhat) - k_E(xhat) P^-1 dh^T 2 (h(xhat) - y)
/// for a single output.
struct ObserverSpec {
  MetricField metric;
  DynamicalSystem sys;
  std::variant<double, Expr> gain = 1.0;
  std::optional<double> region;  // E; unset means 1.1 d(0)

  /// Throws ValidationError when the system has more than one output or a
  /// constant gain is negative.
  void validate() const;
  double gain_at(const Vec& xhat) const;
  ObserverSpec scaled(double factor) const;
};

Vec observer_rhs(const ObserverSpec& spec, const Vec& xhat, const Vec& y);

/// Two-state observer that runs in the flat chart and maps back through y.
struct ReferenceStep {
  Vec derivative;  // d/dt of the internal state
  Vec estimate;    // xhat
};
ReferenceStep reference_observer_rhs(const Vec& internal, const Vec& y);

/// An observer as seen by the simulator: an internal state z with its own
/// dynamics, the map from z to the estimate, and the inverse for initialization.
struct ObserverModel {
  std::string name;
  int state_dim = 0;
  std::function<Vec(const Vec& z, const Vec& y)> rhs;
  std::function<Vec(const Vec& z, const Vec& y)> estimate;
  std::function<Vec(const Vec& xhat, const Vec& y)> initial_state;
};

ObserverModel spec_observer(const ObserverSpec& spec);
ObserverModel reference_observer();

enum TraceFlag : std::uint8_t {
  kFlagBvpFailure = 1,
  kFlagOutsideDomain = 2,
};

std::string flag_string(std::uint8_t flags);

struct SimulationTrace {
  std::vector<double> t;
  std::vector<Vec> x, xhat, y, internal;
  std::vector<double> d;                 // NaN where missing
  std::optional<std::vector<double>> v;  // closed-form oracle when available
  std::vector<std::uint8_t> flags;

  std::size_t size() const { return t.size(); }
  bool has_distance() const { return d.size() == t.size() && !t.empty(); }
};

struct SimOptions {
  double tol = 1e-9;
  double dt = 0.01;
  std::optional<Box> box;  // leaving it throws DomainExit
};

SimulationTrace simulate(const DynamicalSystem& sys, const ObserverModel& observer, const Vec& x0,
                         const Vec& xhat0, double T, const SimOptions& opts = {});

/// Fills trace.d with the Riemannian distance between estimate and state,
/// warm-starting each solve from the previous sample.
void distance_trace(const MetricField& p, SimulationTrace& trace,
                    const ShootingOptions& shooting = {});

using PairFunction = std::function<double(const Vec& xhat, const Vec& x)>;
void attach_oracle(SimulationTrace& trace, const PairFunction& v);

/// Forward-difference Dini estimate of d must satisfy
/// D+d <= -(q/4) d + 1e-3 max d wherever d < E and both states are interior.
ConditionReport verify_decay(const SimulationTrace& trace, double q, std::optional<double> E,
                             const Box& domain);

struct GainScan {
  std::optional<double> k_min;
  std::vector<std::pair<double, Verdict>> tried;
};

struct ScanSetup {
  Vec x0, xhat0;
  double T = 4.0;
  double q = 0.0;
  std::optional<double> E;
  SimOptions sim;
  ShootingOptions shooting;
  int max_power = 10;
};

/// Tries k = 2^0, 2^1, ... and stops at the first gain that passes verify_decay.
GainScan scan_gain(const ObserverSpec& spec, const ScanSetup& setup);

/// Everything needed to reproduce the two-dimensional example system.
struct Example1 {
  DynamicalSystem sys;
  MetricField metric;           // contraction metric used by the observer
  MetricField distance_metric;  // metric whose distance has a closed form
  Diffeomorphism diffeo;        // into the flat chart and back
  PairFunction V;               // Lyapunov function of the reference observer
  PairFunction distance_oracle; // closed-form distance of distance_metric
  ObserverModel reference;
  std::function<ObserverSpec(double k)> observer;
  Box box;
};

Example1 builtin_example1();

}  // namespace riemobs
