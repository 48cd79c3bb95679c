#include "riemobs/detect.hpp"

#include "riemobs/errors.hpp"
#include "riemobs/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace riemobs {

namespace {

constexpr double kEscapeNorm = 1e12;

Mat gain_at(const Mat& pi, const Mat& c, double rho, const Vec& x) {
  Eigen::LLT<Mat> llt(pi);
  if (llt.info() != Eigen::Success) throw SingularMetric(to_std(x));
  return (0.5 * rho) * llt.solve(c.transpose());
}

}  // namespace

TrajectoryLinearization linearize_along(const DynamicalSystem& sys, const MetricField& p,
                                        const Vec& x0, double T, double dt, double tol) {
  const int n = sys.dim();
  if (x0.size() != n) throw ValidationError("linearize_along: x0 has the wrong dimension");
  if (!(T > 0)) throw ValidationError("linearize_along: T must be positive");
  TrajectoryLinearization lin{sys, p, x0, uniform_times(0.0, T, dt), {}, {}, {}, {}, 0.0, 0.0};

  OdeOptions o;
  o.rtol = tol;
  o.atol = tol;
  auto rhs = [&sys](double, const Vec& y, Vec& dy) { dy = sys.f(y); };
  auto guard = [](double, const Vec& y) {
    return y.allFinite() && y.cwiseAbs().maxCoeff() < kEscapeNorm;
  };
  OdeResult r = integrate(rhs, 0.0, x0, T, o, lin.t, guard);
  if (r.status != OdeStatus::ok)
    throw IntegrationFailure("trajectory escapes or cannot be integrated", r.t_last);

  lin.x = std::move(r.y_out);
  lin.p_lower = std::numeric_limits<double>::infinity();
  for (const Vec& x : lin.x) {
    lin.a.push_back(sys.jacobian_f(x));
    lin.c.push_back(sys.jacobian_h(x));
    lin.pi.push_back(eval_metric(p, x));
    Vec ev = sym_eigenvalues(lin.pi.back());
    lin.p_lower = std::min(lin.p_lower, ev(0));
    lin.p_upper = std::max(lin.p_upper, ev(ev.size() - 1));
  }
  return lin;
}

GainSchedule detect_gain(const TrajectoryLinearization& lin, RhoFunction rho) {
  GainSchedule g;
  g.rho = std::move(rho);
  for (std::size_t j = 0; j < lin.t.size(); ++j) {
    double r = g.rho(lin.x[j]);
    g.rho_values.push_back(r);
    g.k.push_back(gain_at(lin.pi[j], lin.c[j], r, lin.x[j]));
    g.sup_norm = std::max(g.sup_norm, g.k.back().jacobiSvd().singularValues()(0));
  }
  return g;
}

GainSchedule detect_gain(const TrajectoryLinearization& lin, const RhoTable& table) {
  GainSchedule g = detect_gain(lin, [table](const Vec& x) { return table(x); });
  for (std::size_t j = 0; j < lin.t.size(); ++j)
    if (!table.covers(lin.x[j])) g.extrapolated_times.push_back(lin.t[j]);
  return g;
}

std::vector<Vec> standard_initial_set(int n) {
  std::vector<Vec> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(Vec::Unit(n, i));
    out.push_back(-Vec::Unit(n, i));
  }
  out.push_back(Vec::Ones(n) / std::sqrt(static_cast<double>(n)));
  return out;
}

ConditionReport check_ltv_stability(const TrajectoryLinearization& lin, const GainSchedule& gain,
                                    double q, const std::vector<Vec>& xi0, const LtvOptions& opts,
                                    std::vector<std::vector<double>>* v_traces) {
  if (!(q > 0)) throw ValidationError("check_ltv_stability: q must be positive");
  if (gain.k.size() != lin.t.size()) throw ValidationError("check_ltv_stability: grids not aligned");
  const int n = lin.sys.dim();
  const DynamicalSystem& sys = lin.sys;
  const MetricField& p = lin.metric;

  // X and xi are integrated together so A, C, Pi, K are exact between grid nodes.
  OdeRhs rhs = [&](double, const Vec& y, Vec& dy) {
    Vec x = y.head(n), xi = y.tail(n);
    Mat c = sys.jacobian_h(x);
    Mat k = gain_at(p.value(x), c, gain.rho(x), x);
    dy.resize(2 * n);
    dy.head(n) = sys.f(x);
    dy.tail(n) = sys.jacobian_f(x) * xi - k * (c * xi);
  };
  OdeOptions o;
  o.rtol = opts.ode_tol;
  o.atol = opts.ode_tol;

  struct Run {
    std::vector<double> v;
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t at = 0;
    Vec xi_at;
  };
  auto runs = parallel_map(
      xi0.size(),
      [&](std::size_t i) {
        Vec y0(2 * n);
        y0 << lin.x0, xi0[i];
        OdeResult r = integrate(rhs, 0.0, y0, lin.t.back(), o, lin.t);
        if (r.status != OdeStatus::ok)
          throw IntegrationFailure("linear time-varying system failed", r.t_last);
        Run run;
        for (std::size_t j = 0; j < lin.t.size(); ++j) {
          Vec xi = r.y_out[j].tail(n);
          run.v.push_back(xi.dot(lin.pi[j] * xi));
        }
        const double v0 = run.v.front();
        for (std::size_t j = lin.t.size() > 1 ? 1 : 0; j < lin.t.size(); ++j) {
          double bound = v0 * std::exp(-0.5 * q * lin.t[j]);
          double excess = bound > 0 ? run.v[j] / bound - 1.0 : run.v[j];
          if (excess > run.worst) {
            run.worst = excess;
            run.at = j;
            run.xi_at = r.y_out[j].tail(n);
          }
        }
        return run;
      },
      opts.exec);

  ConditionReport rep;
  rep.check = "ltv-stability";
  rep.grid_size = lin.t.size() * xi0.size();
  rep.tolerance = opts.tol;
  rep.verdict = Verdict::pass;
  if (runs.empty()) {
    rep.verdict = Verdict::inconclusive;
    rep.notes.push_back("no initial conditions");
    return rep;
  }
  // Witness: the largest relative excess over the envelope.
  std::size_t worst = 0;
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].worst > runs[worst].worst) worst = i;
  const Run& w = runs[worst];
  rep.worst_residual = w.worst;
  rep.witness_time = lin.t[w.at];
  rep.witness_point = to_std(lin.x[w.at]);
  rep.witness_direction = to_std(w.xi_at);
  if (w.worst > opts.tol) {
    rep.verdict = Verdict::fail;
    rep.notes.push_back("envelope exceeded for initial condition " + std::to_string(worst) +
                        " at t=" + std::to_string(lin.t[w.at]));
  }
  if (v_traces) {
    v_traces->clear();
    for (Run& r : runs) v_traces->push_back(std::move(r.v));
  }
  return rep;
}

}  // namespace riemobs
