#include "riemobs/conditions.hpp"

#include "riemobs/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace riemobs {

namespace {

constexpr double kNoKernel = -std::numeric_limits<double>::infinity();

struct PointResult {
  double residual = kNoKernel;
  Vec direction;
  bool rank_deficient = false;
};

// Serial reduction: max residual, first grid index wins ties.
ConditionReport reduce(const char* name, const Grid& grid, const std::vector<PointResult>& pts,
                       double tol) {
  ConditionReport rep;
  rep.check = name;
  rep.grid_size = grid.size();
  rep.tolerance = tol;
  std::size_t worst = pts.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].rank_deficient) rep.rank_deficient_points.push_back(to_std(grid.point(i)));
    if (pts[i].residual == kNoKernel) continue;
    if (worst == pts.size() || pts[i].residual > pts[worst].residual) worst = i;
  }
  if (worst == pts.size()) {
    rep.verdict = Verdict::pass;
    rep.worst_residual = 0.0;
    rep.notes.push_back("dh/dx has full column rank everywhere; nothing to check");
    return rep;
  }
  rep.worst_residual = pts[worst].residual;
  rep.witness_point = to_std(grid.point(worst));
  if (pts[worst].direction.size() > 0) rep.witness_direction = to_std(pts[worst].direction);
  rep.verdict = rep.worst_residual <= tol ? Verdict::pass : Verdict::fail;
  if (!rep.rank_deficient_points.empty())
    rep.notes.push_back(std::to_string(rep.rank_deficient_points.size()) +
                        " grid points where dh/dx loses rank");
  return rep;
}

// Top eigenpair of a symmetric matrix.
std::pair<double, Vec> top_eigen(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  Eigen::Index last = m.rows() - 1;
  return {es.eigenvalues()(last), es.eigenvectors().col(last)};
}

struct PointData {
  Mat l, ctc, p;
};

PointData point_data(const MetricField& p, const DynamicalSystem& sys, const Vec& x) {
  Mat c = sys.jacobian_h(x);
  return {lie_derivative(p, sys, x), c.transpose() * c, eval_metric(p, x)};
}

double h2_value(const PointData& d, double rho, double q) {
  return lambda_max(d.l - rho * d.ctc + q * d.p);
}

}  // namespace

Mat kernel_basis(const DynamicalSystem& sys, const Vec& x, int* rank) {
  Mat c = sys.jacobian_h(x);
  const int n = static_cast<int>(c.cols());
  Eigen::JacobiSVD<Mat> svd(c, Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  int r = 0;
  if (sv.size() > 0 && sv(0) > 0)
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > kRankRelTol * sv(0)) ++r;
  if (rank) *rank = r;
  return svd.matrixV().rightCols(n - r);
}

ConditionReport check_conditional_negativity(const MetricField& p, const DynamicalSystem& sys,
                                             const Grid& grid, double tol, Exec exec) {
  auto pts = parallel_map(
      grid.size(),
      [&](std::size_t i) {
        Vec x = grid.point(i);
        int rank = 0;
        Mat b = kernel_basis(sys, x, &rank);
        PointResult r;
        r.rank_deficient = rank < sys.outputs();
        if (b.cols() == 0) return r;
        Mat reduced = b.transpose() * lie_derivative(p, sys, x) * b;
        auto [lam, vec] = top_eigen(reduced);
        r.residual = lam;
        r.direction = canonical_sign(b * vec);
        return r;
      },
      exec);
  return reduce("conditional-negativity", grid, pts, tol);
}

// ---------------------------------------------------------------------------

RhoTable::RhoTable(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw ValidationError("rho table size mismatch");
}

double RhoTable::max() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double RhoTable::operator()(const Vec& x) const {
  const Box& box = grid_.box();
  const auto& counts = grid_.counts();
  const int n = box.dim();
  Vec c = box.clamp(x);
  std::vector<int> base(n);
  std::vector<double> frac(n);
  for (int a = 0; a < n; ++a) {
    if (counts[a] == 1) {
      base[a] = 0;
      frac[a] = 0.0;
      continue;
    }
    double u = (c(a) - box.lower[a]) / (box.upper[a] - box.lower[a]) * (counts[a] - 1);
    int k = std::min(static_cast<int>(std::floor(u)), counts[a] - 2);
    k = std::max(k, 0);
    base[a] = k;
    frac[a] = std::clamp((c(a) - grid_.node(a, k)) / (grid_.node(a, k + 1) - grid_.node(a, k)),
                         0.0, 1.0);
  }
  double sum = 0.0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < n; ++a) {
      int bit = (corner >> a) & 1;
      if (counts[a] == 1 && bit) {
        w = 0.0;
        break;
      }
      w *= bit ? frac[a] : 1.0 - frac[a];
      flat = flat * counts[a] + static_cast<std::size_t>(base[a] + bit);
    }
    if (w != 0.0) sum += w * values_[flat];
  }
  return sum;
}

RhoFit fit_rho_q(const MetricField& p, const DynamicalSystem& sys, const Grid& grid,
                 std::optional<double> q_target, const FitOptions& opts) {
  auto data = parallel_map(
      grid.size(), [&](std::size_t i) { return point_data(p, sys, grid.point(i)); }, opts.exec);

  // First grid index where even rho_max fails at q, or size() when feasible.
  auto first_infeasible = [&](double q) {
    auto bad = parallel_map(
        data.size(),
        [&](std::size_t i) { return static_cast<char>(h2_value(data[i], opts.rho_max, q) > 0.0); },
        opts.exec);
    return static_cast<std::size_t>(std::find(bad.begin(), bad.end(), char{1}) - bad.begin());
  };

  if (std::size_t i = first_infeasible(0.0); i < data.size())
    throw Infeasible(to_std(grid.point(i)));

  double lo = 0.0, hi = 1.0;
  while (hi < opts.q_cap && first_infeasible(hi) == data.size()) {
    lo = hi;
    hi *= 2.0;
  }
  double q_achieved;
  if (hi >= opts.q_cap && first_infeasible(opts.q_cap) == data.size()) {
    q_achieved = opts.q_cap;
  } else {
    while (hi - lo > opts.rel_tol * hi) {
      double mid = 0.5 * (lo + hi);
      (first_infeasible(mid) == data.size() ? lo : hi) = mid;
    }
    q_achieved = lo;
  }

  RhoFit fit;
  fit.q_achieved = q_achieved;
  fit.q_target = q_target ? *q_target : 0.5 * q_achieved;
  const double q = fit.q_target;

  struct RhoPoint {
    double rho;
    bool feasible;
    double residual;
  };
  auto rho = parallel_map(
      data.size(),
      [&](std::size_t i) {
        const PointData& d = data[i];
        if (h2_value(d, 0.0, q) <= 0.0) return RhoPoint{0.0, true, h2_value(d, 0.0, q)};
        if (h2_value(d, opts.rho_max, q) > 0.0)
          return RhoPoint{opts.rho_max, false, h2_value(d, opts.rho_max, q)};
        double a = 0.0, b = opts.rho_max;
        // Shrink the bracket geometrically before bisecting.
        while (b > 1e-12 && h2_value(d, 0.5 * b, q) <= 0.0) b *= 0.5;
        a = b * 0.5 > 1e-12 ? 0.5 * b : 0.0;
        while (b - a > opts.rel_tol * b) {
          double mid = 0.5 * (a + b);
          (h2_value(d, mid, q) <= 0.0 ? b : a) = mid;
        }
        return RhoPoint{b, true, h2_value(d, b, q)};
      },
      opts.exec);

  std::vector<double> values;
  values.reserve(rho.size());
  ConditionReport& rep = fit.report;
  rep.check = "fit-rho-q";
  rep.grid_size = grid.size();
  rep.tolerance = opts.rel_tol;
  std::size_t worst = 0, first_bad = rho.size();
  for (std::size_t i = 0; i < rho.size(); ++i) {
    values.push_back(rho[i].rho);
    if (rho[i].residual > rho[worst].residual) worst = i;
    if (!rho[i].feasible && first_bad == rho.size()) first_bad = i;
  }
  rep.worst_residual = rho[worst].residual;
  rep.witness_point = to_std(grid.point(first_bad < rho.size() ? first_bad : worst));
  if (first_bad < rho.size()) {
    rep.verdict = Verdict::fail;
    rep.notes.push_back("q_target exceeds what rho <= rho_max admits");
  } else {
    rep.verdict = q_achieved > 0.0 ? Verdict::pass : Verdict::inconclusive;
  }
  fit.rho = RhoTable(grid, std::move(values));
  return fit;
}

ConditionReport check_h2(const MetricField& p, const DynamicalSystem& sys, const RhoTable& rho,
                         double q, const Grid& grid, double tol, Exec exec) {
  auto pts = parallel_map(
      grid.size(),
      [&](std::size_t i) {
        Vec x = grid.point(i);
        PointData d = point_data(p, sys, x);
        auto [lam, vec] = top_eigen(d.l - rho(x) * d.ctc + q * d.p);
        return PointResult{lam, canonical_sign(vec), false};
      },
      exec);
  ConditionReport rep = reduce("h2-inequality", grid, pts, tol);
  if (!rho.covers(from_std(grid.box().lower)) || !rho.covers(from_std(grid.box().upper)))
    rep.notes.push_back("grid extends beyond the rho table; rho clamped at its boundary");
  return rep;
}

ConditionReport check_totally_geodesic(const MetricField& p, const DynamicalSystem& sys,
                                       const Grid& grid, double tol, Exec exec) {
  const int n = p.dim();
  auto pts = parallel_map(
      grid.size(),
      [&](std::size_t i) {
        Vec x = grid.point(i);
        int rank = 0;
        Mat b = kernel_basis(sys, x, &rank);
        PointResult r;
        r.rank_deficient = rank < sys.outputs();
        if (b.cols() == 0) return r;
        Mat c = sys.jacobian_h(x);
        auto hess = sys.hessians_h(x);
        Tensor3 gamma = christoffel(p, x);
        r.residual = 0.0;
        for (int j = 0; j < sys.outputs(); ++j) {
          Mat q = hess[j];
          for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) {
              double s = 0.0;
              for (int a = 0; a < n; ++a) s += c(j, a) * gamma.at(a, k, l);
              q(k, l) -= s;
            }
          Mat reduced = b.transpose() * q * b;
          Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (reduced + reduced.transpose()));
          Eigen::Index arg = 0;
          double norm = es.eigenvalues().cwiseAbs().maxCoeff(&arg);
          if (j == 0 || norm > r.residual) {
            r.residual = norm;
            r.direction = canonical_sign(b * es.eigenvectors().col(arg));
          }
        }
        return r;
      },
      exec);
  return reduce("totally-geodesic", grid, pts, tol);
}

// ---------------------------------------------------------------------------

ConditionReport check_geodesic_convexity_spot(const MetricField& p, const DynamicalSystem& sys,
                                              const Vec& y, const std::vector<PointPair>& pairs,
                                              double tol, const ShootingOptions& shooting,
                                              Exec exec) {
  for (const auto& [a, b] : pairs) {
    if ((sys.h(a) - y).cwiseAbs().maxCoeff() > 1e-10 || (sys.h(b) - y).cwiseAbs().maxCoeff() > 1e-10)
      throw ValidationError("convexity check: pair point is not on the level set");
  }
  struct PairResult {
    double residual = 0.0;
    Vec witness;
    bool converged = true;
  };
  auto res = parallel_map(
      pairs.size(),
      [&](std::size_t i) {
        PairResult r;
        const auto& [a, b] = pairs[i];
        r.witness = a;
        if ((a - b).cwiseAbs().maxCoeff() == 0.0) return r;
        try {
          MinimalGeodesic g = minimal_geodesic(p, a, b, shooting);
          for (const Vec& x : g.path.position) {
            double dev = (sys.h(x) - y).cwiseAbs().maxCoeff();
            if (dev > r.residual) {
              r.residual = dev;
              r.witness = x;
            }
          }
        } catch (const NoConvergence&) {
          r.converged = false;
        }
        return r;
      },
      exec);
  ConditionReport rep;
  rep.check = "geodesic-convexity";
  rep.grid_size = pairs.size();
  rep.tolerance = tol;
  rep.verdict = Verdict::pass;
  std::size_t worst = res.size(), unsolved = 0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (!res[i].converged) {
      ++unsolved;
      continue;
    }
    if (worst == res.size() || res[i].residual > res[worst].residual) worst = i;
  }
  if (worst < res.size()) {
    rep.worst_residual = res[worst].residual;
    rep.witness_point = to_std(res[worst].witness);
    if (rep.worst_residual > tol) rep.verdict = Verdict::fail;
  }
  if (unsolved > 0) {
    rep.notes.push_back(std::to_string(unsolved) + " pairs without a converged geodesic");
    if (rep.verdict == Verdict::pass) rep.verdict = Verdict::inconclusive;
  }
  return rep;
}

std::vector<PointPair> sample_level_set_pairs(const DynamicalSystem& sys, const Vec& y,
                                              const Box& box, int count, std::uint64_t seed) {
  const int n = sys.dim();
  std::mt19937_64 rng(seed);
  std::vector<Vec> pts;
  for (int attempt = 0; static_cast<int>(pts.size()) < 2 * count && attempt < 200 * count;
       ++attempt) {
    Vec x(n);
    for (int a = 0; a < n; ++a)
      x(a) = std::uniform_real_distribution<double>(box.lower[a], box.upper[a])(rng);
    bool ok = false;
    for (int it = 0; it < 50; ++it) {
      Vec r = sys.h(x) - y;
      if (r.cwiseAbs().maxCoeff() <= 1e-12) {
        ok = true;
        break;
      }
      Mat c = sys.jacobian_h(x);
      x -= c.completeOrthogonalDecomposition().solve(r);
      if (!x.allFinite()) break;
    }
    if (ok && box.contains(x)) pts.push_back(x);
  }
  std::vector<PointPair> pairs;
  for (std::size_t i = 0; i + 1 < pts.size(); i += 2) pairs.emplace_back(pts[i], pts[i + 1]);
  return pairs;
}

ConditionReport check_gain_margin(const MetricField& p, const DynamicalSystem& sys,
                                  const ObserverField& observer, const Vec& x, const Vec& xhat,
                                  const ShootingOptions& shooting) {
  if ((x - xhat).cwiseAbs().maxCoeff() == 0.0)
    throw ValidationError("gain margin: x and xhat must differ");
  MinimalGeodesic g = minimal_geodesic(p, x, xhat, shooting);
  Vec y = sys.h(x);
  ConditionReport rep;
  rep.check = "gain-margin";
  std::vector<double> ip;
  std::vector<std::size_t> index;
  for (std::size_t i = 1; i + 1 < g.path.size(); ++i) {
    const Vec& gam = g.path.position[i];
    const Vec& vel = g.path.velocity[i];
    Vec corr = observer(gam, y) - sys.f(gam);
    ip.push_back(vel.dot(p.value(gam) * corr));
    index.push_back(i);
  }
  if (ip.empty()) throw ValidationError("gain margin: geodesic has no interior samples");
  double scale = 1.0;
  for (double v : ip) scale = std::max(scale, std::abs(v));
  std::size_t worst = 0;
  for (std::size_t k = 1; k < ip.size(); ++k)
    if (ip[k] > ip[worst]) worst = k;
  rep.grid_size = ip.size();
  rep.tolerance = -1e-12 * scale;
  rep.worst_residual = ip[worst];
  rep.witness_point = to_std(g.path.position[index[worst]]);
  rep.witness_direction = to_std(g.path.velocity[index[worst]]);
  rep.verdict = ip[worst] < rep.tolerance ? Verdict::pass : Verdict::fail;
  return rep;
}

}  // namespace riemobs
