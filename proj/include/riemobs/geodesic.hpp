#pragma once

// Geodesics of a metric field: initial value integration, path length,
// shooting for the two-point problem, and the Riemannian distance.

#include "riemobs/domain.hpp"
#include "riemobs/exec.hpp"
#include "riemobs/linalg.hpp"
#include "riemobs/metric.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace riemobs {

/// Samples (s_i, gamma_i, gamma'_i), s strictly increasing. Adaptive steps
/// are recorded together with their midpoints so that consecutive sample
/// pairs are equally spaced.
struct GeodesicPath {
  std::vector<double> s;
  std::vector<Vec> position;
  std::vector<Vec> velocity;
  bool normalized = false;

  std::size_t size() const { return s.size(); }
  double span() const { return s.empty() ? 0.0 : s.back() - s.front(); }
  const Vec& start() const { return position.front(); }
  const Vec& end() const { return position.back(); }
};

struct GeodesicOptions {
  double tol = 1e-9;                 // absolute and relative
  bool normalize = true;             // rescale v0 to unit speed first
  std::optional<Box> box;            // defaults to the metric's domain
};

/// gamma'' = -Gamma(gamma)[gamma', gamma'] from (x0, v0) over [0, s_max].
/// Throws IntegrationFailure or DomainExit.
GeodesicPath geodesic_ivp(const MetricField& p, const Vec& x0, const Vec& v0, double s_max,
                          const GeodesicOptions& opts = {});

/// v / sqrt(v^T P(x) v). Throws ZeroVelocity.
Vec normalize_velocity(const MetricField& p, const Vec& x, const Vec& v);

/// Composite Simpson (irregular spacing) of sqrt(gamma'^T P gamma').
double path_length(const MetricField& p, const GeodesicPath& path);

struct ShootingOptions {
  int restarts = 4;               // perturbed chords besides the plain chord
  std::uint64_t seed = 0;
  double ivp_tol = 1e-11;
  double fd_step = 1e-7;
  int max_newton = 40;
  int max_halvings = 30;
  double residual_tol = 1e-9;     // scaled by (1 + |x2|_inf)
  double tie_tol = 1e-9;          // equal lengths below this are ties
  std::optional<Vec> warm_start;  // initial velocity scaled by the length, i.e. s_hat * v0
  std::optional<Box> box;         // defaults to the metric's domain
  Exec exec = Exec::serial;
};

struct MinimalGeodesic {
  GeodesicPath path;   // normalized, gamma(0) = x1, gamma(s_hat) = x2
  double length = 0.0; // s_hat
  Vec v0;              // unit initial velocity
  double residual = 0.0;
  int converged_candidates = 0;
  bool ambiguous = false;  // two candidates tie in length but differ in path
};

/// Shooting on the unknown w = s_hat * v0 with Newton steps, finite-difference
/// sensitivities and backtracking; multi-start from the chord and perturbed
/// chords; the shortest converged candidate wins. Throws NoConvergence.
MinimalGeodesic minimal_geodesic(const MetricField& p, const Vec& x1, const Vec& x2,
                                 const ShootingOptions& opts = {});

/// Riemannian distance; 0 when the points coincide.
double distance(const MetricField& p, const Vec& x1, const Vec& x2,
                const ShootingOptions& opts = {});

}  // namespace riemobs
