#include "riemobs/ode.hpp"

#include "riemobs/errors.hpp"

#include <algorithm>
#include <cmath>

namespace riemobs {

namespace {

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output.
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const OdeOptions& o) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    double sc = o.atol + o.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    double r = err(i) / sc;
    s += r * r;
  }
  return std::sqrt(s / std::max<Eigen::Index>(err.size(), 1));
}

double initial_step(const OdeRhs& rhs, double t0, const Vec& y0, const Vec& f0, double span,
                    const OdeOptions& o) {
  Vec sc = (o.atol + o.rtol * y0.array().abs()).matrix();
  double dn = std::sqrt((y0.array() / sc.array()).square().mean());
  double fn = std::sqrt((f0.array() / sc.array()).square().mean());
  double h = (dn < 1e-5 || fn < 1e-5) ? 1e-6 : 0.01 * dn / fn;
  h = std::min(h, span);
  Vec y1 = y0 + h * f0, f1(y0.size());
  rhs(t0 + h, y1, f1);
  double ddn = std::sqrt((((f1 - f0).array() / sc.array()).square().mean())) / h;
  double m = std::max(fn, ddn);
  double h1 = m <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / m, 1.0 / 5);
  return std::min({100 * h, h1, span});
}

}  // namespace

Vec DenseStep::at(double t) const {
  double th = (t - t0) / h;
  double th1 = 1.0 - th;
  return y0 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)));
}

OdeResult integrate(const OdeRhs& rhs, double t0, const Vec& y0, double t_end,
                    const OdeOptions& opts, std::span<const double> outputs,
                    const StepGuard& guard, bool keep_steps) {
  if (!(t_end > t0)) throw ValidationError("integrate: t_end must exceed t0");
  const Eigen::Index n = y0.size();
  const double span = t_end - t0;
  OdeResult res;
  std::size_t next_out = 0;
  auto emit_upto = [&](double t_hi, const DenseStep* step, const Vec& y_hi) {
    while (next_out < outputs.size() && outputs[next_out] <= t_hi) {
      double to = outputs[next_out];
      res.t_out.push_back(to);
      if (step == nullptr || to == t_hi)
        res.y_out.push_back(y_hi);
      else
        res.y_out.push_back(step->at(to));
      ++next_out;
    }
  };

  double t = t0;
  Vec y = y0;
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y1(n);
  rhs(t, y, k1);
  emit_upto(t, nullptr, y);
  double h = opts.initial_step > 0 ? opts.initial_step : initial_step(rhs, t, y, k1, span, opts);
  const double h_min = opts.min_step * std::max(1.0, span);
  bool last_rejected = false;

  while (t < t_end) {
    if (res.accepted + res.rejected >= opts.max_steps) {
      res.status = OdeStatus::too_many_steps;
      break;
    }
    if (h < h_min) {
      res.status = OdeStatus::step_underflow;
      break;
    }
    bool final_step = false;
    if (t + h >= t_end || t_end - (t + h) < 1e-12 * span) {
      h = t_end - t;
      final_step = true;
    }
    ytmp = y + h * a21 * k1;
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(t + h, y1, k7);
    Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = error_norm(err, y, y1, opts);
    if (!std::isfinite(en)) {
      h *= 0.25;
      ++res.rejected;
      last_rejected = true;
      continue;
    }
    if (en <= 1.0) {
      DenseStep st;
      st.t0 = t;
      st.h = h;
      st.y0 = y;
      st.y1 = y1;
      st.r2 = y1 - y;
      st.r3 = h * k1 - st.r2;
      st.r4 = st.r2 - h * k7 - st.r3;
      st.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      double t_new = final_step ? t_end : t + h;
      emit_upto(t_new, &st, y1);
      if (keep_steps) res.steps.push_back(st);
      t = t_new;
      y = y1;
      k1 = k7;
      ++res.accepted;
      double fac = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
      if (last_rejected) fac = std::min(fac, 1.0);
      last_rejected = false;
      h *= fac;
      if (guard && !guard(t, y)) {
        res.status = OdeStatus::stopped;
        break;
      }
    } else {
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      ++res.rejected;
      last_rejected = true;
    }
  }
  res.t_last = t;
  res.y_last = y;
  return res;
}

std::vector<double> uniform_times(double t0, double t_end, double dt) {
  if (!(dt > 0) || !(t_end >= t0)) throw ValidationError("uniform_times: need dt > 0 and t_end >= t0");
  std::vector<double> t;
  const auto steps = static_cast<std::size_t>(std::ceil((t_end - t0) / dt - 1e-9));
  for (std::size_t j = 0; j < steps; ++j) t.push_back(t0 + static_cast<double>(j) * dt);
  t.push_back(t_end);
  return t;
}

}  // namespace riemobs
