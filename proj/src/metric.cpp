#include "riemobs/metric.hpp"

#include "riemobs/errors.hpp"

#include <cmath>
#include <random>

namespace riemobs {

Mat Tensor3::slice(int i) const {
  Mat m(n_, n_);
  for (int k = 0; k < n_; ++k)
    for (int l = 0; l < n_; ++l) m(k, l) = at(i, k, l);
  return m;
}

// ---------------------------------------------------------------------------

MetricField::MetricField(int n, std::vector<Expr> upper, Box domain)
    : n_(n), domain_(std::move(domain)) {
  if (static_cast<int>(upper.size()) != n * (n + 1) / 2)
    throw ValidationError("metric: expected " + std::to_string(n * (n + 1) / 2) +
                          " upper-triangle entries");
  if (domain_.dim() != n) throw ValidationError("metric: domain dimension mismatch");
  domain_.validate();
  entries_ = ExprSet(std::move(upper), n);
}

MetricField MetricField::from_matrix(const std::vector<std::vector<Expr>>& entries, Box domain) {
  const int n = static_cast<int>(entries.size());
  std::vector<Expr> upper;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(entries[i].size()) != n) throw ValidationError("metric: not square");
    for (int j = i; j < n; ++j) upper.push_back(entries[i][j]);
  }
  return MetricField(n, std::move(upper), std::move(domain));
}

MetricField MetricField::constant(const Mat& p, Box domain) {
  const int n = static_cast<int>(p.rows());
  std::vector<Expr> upper;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) upper.emplace_back(p(i, j), n);
  return MetricField(n, std::move(upper), std::move(domain));
}

int MetricField::upper_index(int i, int j) const {
  if (i > j) std::swap(i, j);
  return i * n_ - i * (i - 1) / 2 + (j - i);
}

const Expr& MetricField::entry(int i, int j) const { return entries_.expr(upper_index(i, j)); }

Mat MetricField::value(const Vec& x) const {
  auto v = entries_.values({x.data(), static_cast<std::size_t>(x.size())});
  Mat p(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = i; j < n_; ++j) p(i, j) = p(j, i) = v[upper_index(i, j)];
  return p;
}

void MetricField::value_and_partials(const Vec& x, Mat& p, Tensor3& d) const {
  auto jets = entries_.jets1({x.data(), static_cast<std::size_t>(x.size())});
  p.resize(n_, n_);
  d = Tensor3(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = i; j < n_; ++j) {
      const Jet1& e = jets[upper_index(i, j)];
      p(i, j) = p(j, i) = e.v;
      for (int m = 0; m < n_; ++m) d.at(m, i, j) = d.at(m, j, i) = e.g(m);
    }
}

// ---------------------------------------------------------------------------

DynamicalSystem::DynamicalSystem(int n, std::vector<Expr> f, std::vector<Expr> h)
    : n_(n), m_(static_cast<int>(h.size())) {
  if (static_cast<int>(f.size()) != n)
    throw ValidationError("system: f has " + std::to_string(f.size()) + " entries, n=" +
                          std::to_string(n));
  if (h.empty()) throw ValidationError("system.h required");
  f_ = ExprSet(std::move(f), n);
  h_ = ExprSet(std::move(h), n);
}

namespace {
std::span<const double> as_span(const Vec& x) {
  return {x.data(), static_cast<std::size_t>(x.size())};
}
}  // namespace

Vec DynamicalSystem::f(const Vec& x) const { return from_std(f_.values(as_span(x))); }

Mat DynamicalSystem::jacobian_f(const Vec& x) const {
  auto jets = f_.jets1(as_span(x));
  Mat j(n_, n_);
  for (int i = 0; i < n_; ++i) j.row(i) = jets[i].g.transpose();
  return j;
}

Vec DynamicalSystem::h(const Vec& x) const { return from_std(h_.values(as_span(x))); }

Mat DynamicalSystem::jacobian_h(const Vec& x) const {
  auto jets = h_.jets1(as_span(x));
  Mat j(m_, n_);
  for (int i = 0; i < m_; ++i) j.row(i) = jets[i].g.transpose();
  return j;
}

std::vector<Mat> DynamicalSystem::hessians_h(const Vec& x) const {
  auto jets = h_.jets2(as_span(x));
  std::vector<Mat> out;
  out.reserve(jets.size());
  for (const auto& j : jets) out.push_back(mirror_upper(Mat(j.h)));
  return out;
}

// ---------------------------------------------------------------------------

Vec Diffeomorphism::forward(const Vec& x) const {
  ExprSet s(phi, static_cast<int>(x.size()));
  return from_std(s.values(as_span(x)));
}

Vec Diffeomorphism::inverse(const Vec& xbar) const {
  ExprSet s(psi, static_cast<int>(xbar.size()));
  return from_std(s.values(as_span(xbar)));
}

Mat Diffeomorphism::jacobian(const Vec& x) const {
  const int n = static_cast<int>(x.size());
  auto jets = ExprSet(phi, n).jets1(as_span(x));
  Mat j(n, n);
  for (int i = 0; i < n; ++i) j.row(i) = jets[i].g.transpose();
  return j;
}

// ---------------------------------------------------------------------------

namespace {

void check_spd(const Mat& p, const Vec& x) {
  Vec ev = sym_eigenvalues(p);
  double lo = ev.minCoeff();
  double hi = ev.maxCoeff();
  if (!(lo > kSpdRelTol * std::max(1.0, hi))) throw NotPositiveDefinite(to_std(x), lo);
}

}  // namespace

Mat eval_metric(const MetricField& p, const Vec& x) {
  Mat m = p.value(x);
  check_spd(m, x);
  return m;
}

Tensor3 metric_partials(const MetricField& p, const Vec& x) {
  Mat m;
  Tensor3 d;
  p.value_and_partials(x, m, d);
  return d;
}

Tensor3 christoffel(const MetricField& p, const Vec& x) {
  const int n = p.dim();
  Mat m;
  Tensor3 d;
  p.value_and_partials(x, m, d);
  check_spd(m, x);
  Mat inv = m.llt().solve(Mat::Identity(n, n));
  Tensor3 g(n);
  for (int k = 0; k < n; ++k)
    for (int l = k; l < n; ++l) {
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int q = 0; q < n; ++q) s += inv(i, q) * (d.at(l, q, k) + d.at(k, q, l) - d.at(q, k, l));
        g.at(i, k, l) = g.at(i, l, k) = 0.5 * s;
      }
    }
  return g;
}

Mat lie_derivative(const MetricField& p, const DynamicalSystem& sys, const Vec& x) {
  const int n = p.dim();
  Mat m;
  Tensor3 d;
  p.value_and_partials(x, m, d);
  Vec f = sys.f(x);
  Mat a = sys.jacobian_f(x);
  Mat pa = m * a;
  Mat l(n, n);
  for (int k = 0; k < n; ++k)
    for (int j = k; j < n; ++j) {
      double s = 0.0;
      for (int q = 0; q < n; ++q) s += d.at(q, k, j) * f(q);
      l(k, j) = l(j, k) = s + (pa(k, j) + pa(j, k));
    }
  return l;
}

Mat pushforward_metric(const MetricField& p, std::span<const Expr> phi, const Vec& x) {
  const int n = p.dim();
  auto jets = ExprSet({phi.begin(), phi.end()}, n).jets1(as_span(x));
  Mat j(n, n);
  for (int i = 0; i < n; ++i) j.row(i) = jets[i].g.transpose();
  Eigen::JacobiSVD<Mat> svd(j);
  const Vec& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(sv.size() - 1) > 1e-12 * sv(0))) throw SingularJacobian(to_std(x));
  Mat jinv = j.fullPivLu().inverse();
  return mirror_upper(jinv.transpose() * eval_metric(p, x) * jinv);
}

MetricField transform_metric(const MetricField& p, const Diffeomorphism& d, Box new_domain) {
  const int n = p.dim();
  if (static_cast<int>(d.psi.size()) != n || static_cast<int>(d.phi.size()) != n)
    throw ValidationError("diffeomorphism arity mismatch");
  // dpsi_i/dxbar_a
  std::vector<std::vector<Expr>> jpsi(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < n; ++a) jpsi[i][a] = derivative(d.psi[i], a);
  std::vector<std::vector<Expr>> composed(n, std::vector<Expr>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) composed[i][j] = composed[j][i] = substitute(p.entry(i, j), d.psi);
  auto is_zero = [](const Expr& e) {
    return e.root()->op == Op::constant && e.root()->value == 0.0;
  };
  std::vector<Expr> upper;
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      Expr sum(0.0, n);
      bool empty = true;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (is_zero(jpsi[i][a]) || is_zero(jpsi[j][b])) continue;
          Expr term = jpsi[i][a] * composed[i][j] * jpsi[j][b];
          sum = empty ? term : sum + term;
          empty = false;
        }
      upper.push_back(sum);
    }
  return MetricField(n, std::move(upper), std::move(new_domain));
}

DynamicalSystem transform_system(const DynamicalSystem& sys, const Diffeomorphism& d) {
  const int n = sys.dim();
  std::vector<Expr> f, h;
  for (int i = 0; i < n; ++i) {
    Expr sum(0.0, n);
    bool empty = true;
    for (int j = 0; j < n; ++j) {
      Expr dphi = derivative(d.phi[i], j);
      if (dphi.root()->op == Op::constant && dphi.root()->value == 0.0) continue;
      Expr term = substitute(dphi, d.psi) * substitute(sys.f_exprs().expr(j), d.psi);
      sum = empty ? term : sum + term;
      empty = false;
    }
    f.push_back(sum);
  }
  for (std::size_t k = 0; k < sys.h_exprs().size(); ++k)
    h.push_back(substitute(sys.h_exprs().expr(k), d.psi));
  return DynamicalSystem(n, std::move(f), std::move(h));
}

// ---------------------------------------------------------------------------

namespace {

double radical_inverse(std::uint64_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

}  // namespace

std::vector<Vec> ball_samples(int n, double r, int count, std::uint64_t seed) {
  // Halton points in the cube with a seeded Cranley-Patterson shift, keeping
  // those inside the ball.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<double> shift(n, 0.0);
  if (seed != 0)
    for (auto& s : shift) s = u01(rng);
  std::vector<Vec> out;
  out.reserve(count);
  for (std::uint64_t i = 1; static_cast<int>(out.size()) < count; ++i) {
    Vec x(n);
    for (int a = 0; a < n; ++a) {
      double h = radical_inverse(i, kPrimes[a]) + shift[a];
      h -= std::floor(h);
      x(a) = r * (2.0 * h - 1.0);
    }
    if (x.norm() <= r) out.push_back(x);
  }
  return out;
}

CompletenessProbe completeness_probe(const MetricField& p, std::span<const double> radii,
                                     const CompletenessOptions& opts) {
  const int n = p.dim();
  CompletenessProbe probe;
  double prev_r = 0.0;
  for (double r : radii) {
    if (!(r > prev_r)) throw ValidationError("completeness probe: radii must be positive and increasing");
    prev_r = r;
    auto pts = ball_samples(n, r, opts.samples, opts.seed);
    auto mins = parallel_map(
        pts.size(),
        [&](std::size_t i) {
          Mat m = p.value(pts[i]);
          Vec ev = sym_eigenvalues(m);
          if (!(ev.minCoeff() > kSpdRelTol * std::max(1.0, ev.maxCoeff())))
            throw NotPositiveDefinite(to_std(pts[i]), ev.minCoeff());
          return ev.minCoeff();
        },
        opts.exec);
    double lo = mins[0];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < mins.size(); ++i)
      if (mins[i] < lo) {
        lo = mins[i];
        arg = i;
      }
    probe.rows.push_back({r, lo, r * r * lo});
    if (probe.report.witness_point.empty() || lo < probe.report.worst_residual) {
      probe.report.worst_residual = lo;
      probe.report.witness_point = to_std(pts[arg]);
    }
  }
  bool increasing = true;
  for (std::size_t i = 1; i < probe.rows.size(); ++i)
    if (!(probe.rows[i].growth > probe.rows[i - 1].growth)) increasing = false;
  bool large = !probe.rows.empty() && probe.rows.back().growth > opts.threshold;
  ConditionReport& rep = probe.report;
  rep.check = "completeness-probe";
  rep.grid_size = probe.rows.size() * static_cast<std::size_t>(opts.samples);
  rep.tolerance = opts.threshold;
  rep.verdict = (increasing && large) ? Verdict::pass : Verdict::inconclusive;
  rep.notes.push_back("sampled evidence for r^2 * p_min(r) growth, not a certificate");
  return probe;
}

}  // namespace riemobs
