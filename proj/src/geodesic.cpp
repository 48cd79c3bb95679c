#include "riemobs/geodesic.hpp"

#include "riemobs/errors.hpp"
#include "riemobs/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace riemobs {

namespace {

// Gamma(x)[v, v] without forming the full rank-3 array.
Vec christoffel_contract(const MetricField& p, const Vec& x, const Vec& v) {
  const int n = p.dim();
  Mat m;
  Tensor3 d;
  p.value_and_partials(x, m, d);
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(to_std(x), lambda_min(m));
  Vec rhs(n);
  for (int q = 0; q < n; ++q) {
    double a = 0.0, b = 0.0;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        a += d.at(l, q, k) * v(k) * v(l);
        b += d.at(q, k, l) * v(k) * v(l);
      }
    rhs(q) = a - 0.5 * b;
  }
  return llt.solve(rhs);
}

OdeRhs geodesic_rhs(const MetricField& p) {
  const int n = p.dim();
  return [&p, n](double, const Vec& y, Vec& dy) {
    Vec x = y.head(n), v = y.tail(n);
    dy.resize(2 * n);
    dy.head(n) = v;
    dy.tail(n) = -christoffel_contract(p, x, v);
  };
}

OdeOptions ivp_options(double tol) {
  OdeOptions o;
  o.rtol = tol;
  o.atol = tol;
  return o;
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

bool lex_less(const Vec& a, const Vec& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

}  // namespace

Vec normalize_velocity(const MetricField& p, const Vec& x, const Vec& v) {
  if (v.size() == 0 || v.cwiseAbs().maxCoeff() == 0.0) throw ZeroVelocity();
  double q = v.dot(eval_metric(p, x) * v);
  return v / std::sqrt(q);
}

GeodesicPath geodesic_ivp(const MetricField& p, const Vec& x0, const Vec& v0, double s_max,
                          const GeodesicOptions& opts) {
  const int n = p.dim();
  if (!(s_max > 0)) throw ValidationError("geodesic_ivp: s_max must be positive");
  Vec v = opts.normalize ? normalize_velocity(p, x0, v0) : v0;
  if (!opts.normalize && v.cwiseAbs().maxCoeff() == 0.0) throw ZeroVelocity();
  const Box& box = opts.box ? *opts.box : p.domain();
  Vec y0(2 * n);
  y0 << x0, v;
  auto guard = [&](double, const Vec& y) { return box.contains(y.head(n)); };
  OdeResult r = integrate(geodesic_rhs(p), 0.0, y0, s_max, ivp_options(opts.tol), {}, guard, true);
  if (r.status == OdeStatus::stopped) throw DomainExit(r.t_last);
  if (r.status != OdeStatus::ok) throw IntegrationFailure("geodesic integration failed", r.t_last);

  GeodesicPath path;
  path.normalized = opts.normalize;
  auto push = [&](double s, const Vec& y) {
    path.s.push_back(s);
    path.position.push_back(y.head(n));
    path.velocity.push_back(y.tail(n));
  };
  push(0.0, y0);
  for (const DenseStep& st : r.steps) {
    double mid = st.t0 + 0.5 * st.h;
    push(mid, st.at(mid));
    push(st.t0 + st.h, st.y1);
  }
  path.s.back() = s_max;
  return path;
}

double path_length(const MetricField& p, const GeodesicPath& path) {
  const std::size_t count = path.size();
  if (count < 2) return 0.0;
  std::vector<double> f(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Vec& v = path.velocity[i];
    f[i] = std::sqrt(std::max(0.0, v.dot(p.value(path.position[i]) * v)));
  }
  const std::size_t intervals = count - 1;
  auto h = [&](std::size_t i) { return path.s[i + 1] - path.s[i]; };
  if (intervals == 1) return 0.5 * h(0) * (f[0] + f[1]);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < intervals; i += 2) {
    double h0 = h(i), h1 = h(i + 1);
    double hs = h0 + h1;
    double alpha = (2 * h1 * h1 * h1 - h0 * h0 * h0 + 3 * h0 * h1 * h1) / (6 * h1 * hs);
    double beta = (h1 * h1 * h1 + h0 * h0 * h0 + 3 * h1 * h0 * hs) / (6 * h1 * h0);
    double eta = (2 * h0 * h0 * h0 - h1 * h1 * h1 + 3 * h1 * h0 * h0) / (6 * h0 * hs);
    sum += alpha * f[i + 2] + beta * f[i + 1] + eta * f[i];
  }
  if (intervals % 2 == 1) {
    std::size_t k = intervals;
    double h0 = h(k - 2), h1 = h(k - 1);
    double alpha = (2 * h1 * h1 + 3 * h1 * h0) / (6 * (h0 + h1));
    double beta = (h1 * h1 + 3 * h1 * h0) / (6 * h0);
    double eta = h1 * h1 * h1 / (6 * h0 * (h0 + h1));
    sum += alpha * f[k] + beta * f[k - 1] - eta * f[k - 2];
  }
  return sum;
}

// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  bool converged = false;
  Vec w;
  double residual = std::numeric_limits<double>::infinity();
};

class Shooter {
 public:
  Shooter(const MetricField& p, const Vec& x1, const Vec& x2, const ShootingOptions& o)
      : p_(p), x1_(x1), x2_(x2), opts_(o), box_(o.box ? *o.box : p.domain()),
        rhs_(geodesic_rhs(p)), tol_(o.residual_tol * (1.0 + inf_norm(x2))) {}

  // Endpoint of the geodesic with initial velocity w at parameter 1.
  bool endpoint(const Vec& w, Vec& out) const {
    const int n = p_.dim();
    Vec y0(2 * n);
    y0 << x1_, w;
    try {
      auto guard = [&](double, const Vec& y) { return box_.contains(y.head(n)); };
      OdeResult r = integrate(rhs_, 0.0, y0, 1.0, ivp_options(opts_.ivp_tol), {}, guard);
      if (r.status != OdeStatus::ok) return false;
      out = r.y_last.head(n);
      return out.allFinite();
    } catch (const Error&) {
      return false;
    }
  }

  Candidate solve(Vec w) const {
    const int n = p_.dim();
    Candidate c;
    Vec e;
    if (!endpoint(w, e)) return c;
    Vec r = e - x2_;
    for (int it = 0; it <= opts_.max_newton; ++it) {
      c.w = w;
      c.residual = inf_norm(r);
      if (c.residual <= tol_) {
        c.converged = true;
        return c;
      }
      if (it == opts_.max_newton) break;
      Mat jac(n, n);
      for (int j = 0; j < n; ++j) {
        Vec wj = w;
        double hj = opts_.fd_step * std::max(1.0, std::abs(w(j)));
        wj(j) += hj;
        Vec ej;
        if (!endpoint(wj, ej)) return c;
        jac.col(j) = (ej - e) / hj;
      }
      Vec step = jac.fullPivLu().solve(-r);
      if (!step.allFinite()) return c;
      double lambda = 1.0;
      bool moved = false;
      for (int k = 0; k <= opts_.max_halvings; ++k, lambda *= 0.5) {
        Vec wt = w + lambda * step;
        Vec et;
        if (endpoint(wt, et) && (et - x2_).norm() < r.norm()) {
          w = wt;
          e = et;
          r = et - x2_;
          moved = true;
          break;
        }
      }
      if (!moved) return c;
    }
    return c;
  }

 private:
  const MetricField& p_;
  Vec x1_, x2_;
  ShootingOptions opts_;
  Box box_;
  OdeRhs rhs_;
  double tol_;
};

}  // namespace

MinimalGeodesic minimal_geodesic(const MetricField& p, const Vec& x1, const Vec& x2,
                                 const ShootingOptions& opts) {
  const int n = p.dim();
  if (x1.size() != n || x2.size() != n) throw ValidationError("minimal_geodesic: dimension mismatch");
  MinimalGeodesic out;
  if ((x1 - x2).cwiseAbs().maxCoeff() == 0.0) {
    out.path.s = {0.0};
    out.path.position = {x1};
    out.path.velocity = {Vec::Zero(n)};
    out.path.normalized = true;
    out.v0 = Vec::Zero(n);
    return out;
  }

  std::vector<Vec> starts;
  if (opts.warm_start) starts.push_back(*opts.warm_start);
  Vec chord = x2 - x1;
  starts.push_back(chord);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < opts.restarts; ++k) {
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi(i) = gauss(rng);
    starts.push_back(chord + 0.5 * chord.norm() * xi);
  }

  Shooter shooter(p, x1, x2, opts);
  auto results = parallel_map(
      starts.size(), [&](std::size_t i) { return shooter.solve(starts[i]); }, opts.exec);

  struct Converged {
    double length;
    Vec v0;
    double residual;
  };
  std::vector<Converged> ok;
  double best_residual = std::numeric_limits<double>::infinity();
  Mat p1 = eval_metric(p, x1);
  for (const Candidate& c : results) {
    best_residual = std::min(best_residual, c.residual);
    if (!c.converged) continue;
    double len = std::sqrt(c.w.dot(p1 * c.w));
    ok.push_back({len, c.w / len, c.residual});
  }
  if (ok.empty()) throw NoConvergence(best_residual);
  std::sort(ok.begin(), ok.end(), [&](const Converged& a, const Converged& b) {
    if (std::abs(a.length - b.length) > opts.tie_tol) return a.length < b.length;
    return lex_less(a.v0, b.v0);
  });
  const Converged& best = ok.front();
  for (std::size_t i = 1; i < ok.size(); ++i) {
    bool same_length = std::abs(ok[i].length - best.length) < 1e-6 * std::max(1.0, best.length);
    bool other_path = (ok[i].v0 - best.v0).norm() * best.length > 1e-5;
    if (same_length && other_path) out.ambiguous = true;
  }
  out.length = best.length;
  out.v0 = best.v0;
  out.residual = best.residual;
  out.converged_candidates = static_cast<int>(ok.size());
  GeodesicOptions go;
  go.tol = opts.ivp_tol;
  go.normalize = false;
  go.box = opts.box;
  out.path = geodesic_ivp(p, x1, best.v0, best.length, go);
  out.path.normalized = true;
  return out;
}

double distance(const MetricField& p, const Vec& x1, const Vec& x2, const ShootingOptions& opts) {
  if (x1.size() == x2.size() && (x1 - x2).cwiseAbs().maxCoeff() == 0.0) return 0.0;
  return minimal_geodesic(p, x1, x2, opts).length;
}

}  // namespace riemobs
