#include "riemobs/observer_sim.hpp"

#include "riemobs/errors.hpp"
#include "riemobs/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace riemobs {

void ObserverSpec::validate() const {
  if (sys.outputs() != 1)
    throw ValidationError("observer: exactly one output is supported, got " +
                          std::to_string(sys.outputs()));
  if (metric.dim() != sys.dim()) throw ValidationError("observer: metric and system dimensions differ");
  if (const double* k = std::get_if<double>(&gain); k && !(*k >= 0))
    throw ValidationError("observer: k_E must be nonnegative");
  if (region && !(*region > 0)) throw ValidationError("observer: E must be positive");
}

double ObserverSpec::gain_at(const Vec& xhat) const {
  if (const double* k = std::get_if<double>(&gain)) return *k;
  double k = eval(std::get<Expr>(gain), std::span<const double>(xhat.data(), xhat.size()));
  if (k < 0) throw ValidationError("observer: k_E is negative at " + std::to_string(xhat(0)));
  return k;
}

ObserverSpec ObserverSpec::scaled(double factor) const {
  ObserverSpec s = *this;
  if (const double* k = std::get_if<double>(&gain))
    s.gain = factor * *k;
  else
    s.gain = Expr(factor, sys.dim()) * std::get<Expr>(gain);
  return s;
}

Vec observer_rhs(const ObserverSpec& spec, const Vec& xhat, const Vec& y) {
  Vec f = spec.sys.f(xhat);
  Vec r = spec.sys.h(xhat) - y;
  if (r.cwiseAbs().maxCoeff() == 0.0) return f;
  Mat c = spec.sys.jacobian_h(xhat);
  Eigen::LLT<Mat> llt(spec.metric.value(xhat));
  if (llt.info() != Eigen::Success) throw SingularMetric(to_std(xhat));
  return f - spec.gain_at(xhat) * llt.solve(c.transpose() * (2.0 * r));
}

ReferenceStep reference_observer_rhs(const Vec& z, const Vec& y) {
  const double e = z(0) - y(0);
  ReferenceStep s;
  s.derivative.resize(2);
  s.derivative << z(1) - e, -e;
  s.estimate.resize(2);
  s.estimate << z(0), z(1) / std::sqrt(1 + y(0) * y(0));
  return s;
}

ObserverModel spec_observer(const ObserverSpec& spec) {
  spec.validate();
  ObserverModel m;
  m.name = "gradient";
  m.state_dim = spec.sys.dim();
  m.rhs = [spec](const Vec& z, const Vec& y) { return observer_rhs(spec, z, y); };
  m.estimate = [](const Vec& z, const Vec&) { return z; };
  m.initial_state = [](const Vec& xhat, const Vec&) { return xhat; };
  return m;
}

ObserverModel reference_observer() {
  ObserverModel m;
  m.name = "reference";
  m.state_dim = 2;
  m.rhs = [](const Vec& z, const Vec& y) { return reference_observer_rhs(z, y).derivative; };
  m.estimate = [](const Vec& z, const Vec& y) { return reference_observer_rhs(z, y).estimate; };
  m.initial_state = [](const Vec& xhat, const Vec& y) {
    Vec z(2);
    z << xhat(0), xhat(1) * std::sqrt(1 + y(0) * y(0));
    return z;
  };
  return m;
}

std::string flag_string(std::uint8_t flags) {
  std::string s;
  auto add = [&](const char* name) {
    if (!s.empty()) s += ';';
    s += name;
  };
  if (flags & kFlagBvpFailure) add("bvp_failure");
  if (flags & kFlagOutsideDomain) add("outside_domain");
  return s;
}

SimulationTrace simulate(const DynamicalSystem& sys, const ObserverModel& observer, const Vec& x0,
                         const Vec& xhat0, double T, const SimOptions& opts) {
  const int n = sys.dim();
  const int nz = observer.state_dim;
  if (x0.size() != n || xhat0.size() != n) throw ValidationError("simulate: wrong initial dimension");
  if (opts.box && !(opts.box->contains(x0) && opts.box->contains(xhat0)))
    throw ValidationError("simulate: initial states must lie in the domain");

  Vec y0 = sys.h(x0);
  Vec s0(n + nz);
  s0 << x0, observer.initial_state(xhat0, y0);
  OdeRhs rhs = [&](double, const Vec& s, Vec& ds) {
    Vec x = s.head(n);
    Vec y = sys.h(x);
    ds.resize(n + nz);
    ds.head(n) = sys.f(x);
    ds.tail(nz) = observer.rhs(s.tail(nz), y);
  };
  StepGuard guard = nullptr;
  if (opts.box) {
    guard = [&](double, const Vec& s) {
      Vec x = s.head(n);
      return opts.box->contains(x) && opts.box->contains(observer.estimate(s.tail(nz), sys.h(x)));
    };
  }
  OdeOptions o;
  o.rtol = opts.tol;
  o.atol = opts.tol;
  std::vector<double> times = uniform_times(0.0, T, opts.dt);
  OdeResult r = integrate(rhs, 0.0, s0, T, o, times, guard, opts.box.has_value());
  if (r.status == OdeStatus::stopped) {
    // Bisect the last step's interpolant for the first time outside the box.
    const DenseStep& st = r.steps.back();
    double lo = st.t0, hi = st.t0 + st.h;
    for (int it = 0; it < 60 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
      double mid = 0.5 * (lo + hi);
      (guard(mid, st.at(mid)) ? lo : hi) = mid;
    }
    throw DomainExit(hi);
  }
  if (r.status != OdeStatus::ok) throw IntegrationFailure("interconnection failed", r.t_last);

  SimulationTrace tr;
  tr.t = std::move(times);
  for (const Vec& s : r.y_out) {
    Vec x = s.head(n), z = s.tail(nz);
    Vec y = sys.h(x);
    tr.x.push_back(x);
    tr.internal.push_back(z);
    tr.xhat.push_back(observer.estimate(z, y));
    tr.y.push_back(y);
  }
  tr.flags.assign(tr.t.size(), 0);
  return tr;
}

void distance_trace(const MetricField& p, SimulationTrace& trace, const ShootingOptions& shooting) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  trace.d.assign(trace.size(), nan);
  trace.flags.resize(trace.size(), 0);
  std::optional<Vec> warm;
  for (std::size_t j = 0; j < trace.size(); ++j) {
    const Vec& a = trace.xhat[j];
    const Vec& b = trace.x[j];
    if (!p.domain().contains(a) || !p.domain().contains(b)) {
      trace.flags[j] |= kFlagOutsideDomain;
      warm.reset();
      continue;
    }
    if ((a - b).cwiseAbs().maxCoeff() == 0.0) {
      trace.d[j] = 0.0;
      warm.reset();
      continue;
    }
    std::optional<MinimalGeodesic> g;
    if (warm) {
      ShootingOptions w = shooting;
      w.restarts = 0;
      w.warm_start = warm;
      try {
        g = minimal_geodesic(p, a, b, w);
      } catch (const Error&) {
      }
    }
    if (!g) {
      try {
        g = minimal_geodesic(p, a, b, shooting);
      } catch (const Error&) {
      }
    }
    if (!g) {
      trace.flags[j] |= kFlagBvpFailure;
      warm.reset();
      continue;
    }
    trace.d[j] = g->length;
    warm = g->length * g->v0;
  }
}

void attach_oracle(SimulationTrace& trace, const PairFunction& v) {
  std::vector<double> out;
  out.reserve(trace.size());
  for (std::size_t j = 0; j < trace.size(); ++j) out.push_back(v(trace.xhat[j], trace.x[j]));
  trace.v = std::move(out);
}

ConditionReport verify_decay(const SimulationTrace& trace, double q, std::optional<double> E,
                             const Box& domain) {
  if (!(q > 0)) throw ValidationError("verify_decay: q must be positive");
  if (!trace.has_distance()) throw ValidationError("verify_decay: trace has no distance channel");
  ConditionReport rep;
  rep.check = "decay";
  double d_max = 0.0;
  for (double d : trace.d)
    if (std::isfinite(d)) d_max = std::max(d_max, d);
  double region = E ? *E : (std::isfinite(trace.d.front()) ? 1.1 * trace.d.front() : 1.1 * d_max);
  const double tol_rate = 1e-3 * d_max;
  rep.tolerance = tol_rate;
  rep.verdict = Verdict::pass;
  rep.worst_residual = -std::numeric_limits<double>::infinity();
  std::size_t checked = 0, skipped_missing = 0, worst = 0;
  for (std::size_t j = 0; j + 1 < trace.size(); ++j) {
    const double d0 = trace.d[j], d1 = trace.d[j + 1];
    if (!std::isfinite(d0) || !std::isfinite(d1)) {
      ++skipped_missing;
      continue;
    }
    if (!(d0 < region)) continue;
    if (!domain.interior(trace.x[j]) || !domain.interior(trace.xhat[j])) continue;
    const double rate = (d1 - d0) / (trace.t[j + 1] - trace.t[j]);
    const double residual = rate + 0.25 * q * d0;
    ++checked;
    if (residual > rep.worst_residual) {
      rep.worst_residual = residual;
      worst = j;
    }
  }
  rep.grid_size = checked;
  if (checked == 0) {
    rep.worst_residual = 0.0;
    rep.notes.push_back("no samples inside the region");
  } else {
    rep.witness_time = trace.t[worst];
    rep.witness_point = to_std(trace.x[worst]);
    rep.witness_direction = to_std(trace.xhat[worst]);
    if (rep.worst_residual > tol_rate) rep.verdict = Verdict::fail;
  }
  if (skipped_missing > 0) {
    rep.notes.push_back(std::to_string(skipped_missing) + " intervals without a distance value");
    if (rep.verdict == Verdict::pass) rep.verdict = Verdict::inconclusive;
  }
  rep.notes.push_back("E=" + std::to_string(region));
  return rep;
}

GainScan scan_gain(const ObserverSpec& spec, const ScanSetup& setup) {
  GainScan scan;
  for (int power = 0; power <= setup.max_power; ++power) {
    const double k = std::ldexp(1.0, power);
    ObserverSpec s = spec;
    s.gain = k;
    SimulationTrace tr = simulate(s.sys, spec_observer(s), setup.x0, setup.xhat0, setup.T, setup.sim);
    distance_trace(s.metric, tr, setup.shooting);
    ConditionReport r =
        verify_decay(tr, setup.q, setup.E ? setup.E : spec.region, s.metric.domain());
    scan.tried.emplace_back(k, r.verdict);
    if (r.passed()) {
      scan.k_min = k;
      break;
    }
  }
  return scan;
}

Example1 builtin_example1() {
  const std::vector<std::string> vars{"x1", "x2"};
  auto px = [&](const char* s) { return parse(s, vars); };
  Box box = Box::cube(2, -5, 5);
  Example1 ex;
  ex.box = box;
  ex.sys = DynamicalSystem(2, {px("x2*sqrt(1+x1^2)"), px("-(x1/sqrt(1+x1^2))*x2^2")}, {px("x1")});
  ex.metric = MetricField(2, {px("2+x2^2"), px("x1*x2-1"), px("1+x1^2")}, box);
  ex.distance_metric =
      MetricField(2,
                  {px("1 - x1*x2/sqrt(1+x1^2) + x1^2*x2^2/(1+x1^2)"),
                   px("-sqrt(1+x1^2)/2 + x1*x2"), px("1+x1^2")},
                  box);
  ex.diffeo = {{px("x1"), px("x2*sqrt(1+x1^2)")}, {px("x1"), px("x2/sqrt(1+x1^2)")}};
  ex.V = [](const Vec& xh, const Vec& x) {
    const double a = xh(0) - x(0), b = xh(1) - x(1), s = std::sqrt(1 + x(0) * x(0));
    return a * a - a * b * s + b * b * s * s;
  };
  ex.distance_oracle = [](const Vec& a, const Vec& b) {
    const double u = a(0) - b(0);
    const double w = a(1) * std::sqrt(1 + a(0) * a(0)) - b(1) * std::sqrt(1 + b(0) * b(0));
    return std::sqrt(u * u - u * w + w * w);
  };
  ex.reference = reference_observer();
  ex.observer = [sys = ex.sys, metric = ex.metric](double k) {
    ObserverSpec s{metric, sys, k, std::nullopt};
    return s;
  };
  return ex;
}

}  // namespace riemobs
