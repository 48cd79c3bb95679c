#include "riemobs/cli.hpp"

#include "riemobs/conditions.hpp"
#include "riemobs/detect.hpp"
#include "riemobs/errors.hpp"
#include "riemobs/exec.hpp"
#include "riemobs/geodesic.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <toml.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

namespace riemobs {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

int line_of(const toml::node* node) {
  return node ? static_cast<int>(node->source().begin.line) : 0;
}

class Loader {
 public:
  explicit Loader(const toml::table& root) : root_(root) {}

  const toml::table* section(const char* name, bool required) const {
    const toml::node* node = root_.get(name);
    if (!node) {
      if (required) throw ConfigError(std::string("section [") + name + "] required", 1);
      return nullptr;
    }
    if (!node->is_table()) throw ConfigError(std::string(name) + " must be a section", line_of(node));
    return node->as_table();
  }

  static const toml::node* key(const toml::table* t, const char* name) {
    return t ? t->get(name) : nullptr;
  }

  static std::string field(const char* sec, const char* name) {
    return std::string(sec) + "." + name;
  }

  static double number(const toml::node* n, const std::string& what) {
    if (auto v = n->value<double>()) return *v;
    throw ConfigError(what + " must be a number", line_of(n));
  }

  static int integer(const toml::node* n, const std::string& what) {
    if (auto v = n->value<std::int64_t>()) return static_cast<int>(*v);
    throw ConfigError(what + " must be an integer", line_of(n));
  }

  static std::vector<double> numbers(const toml::node* n, const std::string& what) {
    const toml::array* a = n->as_array();
    if (!a) throw ConfigError(what + " must be an array of numbers", line_of(n));
    std::vector<double> out;
    for (const toml::node& e : *a) out.push_back(number(&e, what));
    return out;
  }

  static std::vector<std::string> strings(const toml::node* n, const std::string& what) {
    const toml::array* a = n->as_array();
    if (!a) throw ConfigError(what + " must be an array of strings", line_of(n));
    std::vector<std::string> out;
    for (const toml::node& e : *a) {
      auto s = e.value<std::string>();
      if (!s) throw ConfigError(what + " must contain strings", line_of(&e));
      out.push_back(*s);
    }
    return out;
  }

  static std::vector<Expr> expressions(const toml::node* n, const std::string& what,
                                       const std::vector<std::string>& vars) {
    std::vector<Expr> out;
    for (const std::string& s : strings(n, what)) {
      try {
        out.push_back(parse(s, vars));
      } catch (const Error& e) {
        throw ConfigError(what + ": " + e.what(), line_of(n));
      }
    }
    return out;
  }

 private:
  const toml::table& root_;
};

Vec to_vec(const std::vector<double>& v) { return from_std(v); }

MetricField metric_from(const toml::table* sec, const char* name, int n,
                        const std::vector<std::string>& vars, const Box& domain) {
  const toml::node* p = Loader::key(sec, "P");
  if (!p) throw ConfigError(std::string(name) + ".P required", line_of(sec));
  auto entries = Loader::expressions(p, Loader::field(name, "P"), vars);
  const std::size_t want = static_cast<std::size_t>(n * (n + 1) / 2);
  if (entries.size() != want)
    throw ConfigError(std::string(name) + ".P needs " + std::to_string(want) +
                          " upper-triangle entries, got " + std::to_string(entries.size()),
                      line_of(p));
  return MetricField(n, std::move(entries), domain);
}

}  // namespace

ProblemConfig parse_config(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string(e.description()), static_cast<int>(e.source().begin.line));
  }
  Loader L(root);
  ProblemConfig cfg;
  cfg.source = text;

  const toml::table* sys = L.section("system", true);
  const toml::node* n_node = Loader::key(sys, "n");
  if (!n_node) throw ConfigError("system.n required", line_of(sys));
  cfg.n = Loader::integer(n_node, "system.n");
  if (cfg.n < 1 || cfg.n > kMaxDim)
    throw ConfigError("system.n must be between 1 and " + std::to_string(kMaxDim), line_of(n_node));
  std::vector<std::string> vars;
  for (int i = 1; i <= cfg.n; ++i) vars.push_back("x" + std::to_string(i));

  const toml::node* f_node = Loader::key(sys, "f");
  if (!f_node) throw ConfigError("system.f required", line_of(sys));
  auto f = Loader::expressions(f_node, "system.f", vars);
  if (static_cast<int>(f.size()) != cfg.n)
    throw ConfigError("system.f has " + std::to_string(f.size()) + " entries but n = " +
                          std::to_string(cfg.n),
                      line_of(f_node));
  const toml::node* h_node = Loader::key(sys, "h");
  if (!h_node) throw ConfigError("system.h required", line_of(sys));
  auto h = Loader::expressions(h_node, "system.h", vars);
  if (h.empty()) throw ConfigError("system.h required", line_of(h_node));
  cfg.m = static_cast<int>(h.size());
  if (const toml::node* m_node = Loader::key(sys, "m");
      m_node && Loader::integer(m_node, "system.m") != cfg.m)
    throw ConfigError("system.h has " + std::to_string(cfg.m) + " entries but m = " +
                          std::to_string(Loader::integer(m_node, "system.m")),
                      line_of(h_node));
  cfg.sys = DynamicalSystem(cfg.n, std::move(f), std::move(h));

  const toml::table* dom = L.section("domain", true);
  const toml::node* lo = Loader::key(dom, "lower");
  const toml::node* hi = Loader::key(dom, "upper");
  if (!lo || !hi) throw ConfigError("domain.lower and domain.upper required", line_of(dom));
  cfg.domain = Box{Loader::numbers(lo, "domain.lower"), Loader::numbers(hi, "domain.upper")};
  if (cfg.domain.dim() != cfg.n || static_cast<int>(cfg.domain.upper.size()) != cfg.n)
    throw ConfigError("domain bounds need n entries", line_of(lo));
  try {
    cfg.domain.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("domain: ") + e.what(), line_of(lo));
  }
  if (const toml::node* g = Loader::key(dom, "grid")) {
    cfg.grid_per_axis = Loader::integer(g, "domain.grid");
    if (cfg.grid_per_axis < 2) throw ConfigError("domain.grid must be at least 2", line_of(g));
  }
  cfg.check_box = cfg.domain;
  const toml::node* clo = Loader::key(dom, "check_lower");
  const toml::node* chi = Loader::key(dom, "check_upper");
  if (clo || chi) {
    if (!clo || !chi) throw ConfigError("domain.check_lower and check_upper go together", line_of(clo ? clo : chi));
    cfg.check_box = Box{Loader::numbers(clo, "domain.check_lower"), Loader::numbers(chi, "domain.check_upper")};
    if (cfg.check_box.dim() != cfg.n || static_cast<int>(cfg.check_box.upper.size()) != cfg.n)
      throw ConfigError("domain check bounds need n entries", line_of(clo));
    try {
      cfg.check_box.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("domain check box: ") + e.what(), line_of(clo));
    }
  }

  cfg.metric = metric_from(L.section("metric", true), "metric", cfg.n, vars, cfg.domain);
  if (const toml::table* dm = L.section("distance_metric", false))
    cfg.distance_metric = metric_from(dm, "distance_metric", cfg.n, vars, cfg.domain);

  if (const toml::table* d = L.section("diffeo", false)) {
    const toml::node* phi = Loader::key(d, "phi");
    const toml::node* inv = Loader::key(d, "inverse");
    if (!phi || !inv) throw ConfigError("diffeo.phi and diffeo.inverse required", line_of(d));
    Diffeomorphism df{Loader::expressions(phi, "diffeo.phi", vars),
                      Loader::expressions(inv, "diffeo.inverse", vars)};
    if (static_cast<int>(df.phi.size()) != cfg.n || static_cast<int>(df.psi.size()) != cfg.n)
      throw ConfigError("diffeo.phi and diffeo.inverse need n entries", line_of(phi));
    cfg.diffeo = std::move(df);
  }

  auto& ob = cfg.observer;
  ob.x0 = Vec::Zero(cfg.n);
  ob.xhat0 = Vec::Zero(cfg.n);
  if (const toml::table* o = L.section("observer", false)) {
    if (const toml::node* k = Loader::key(o, "kE")) {
      if (auto s = k->value<std::string>()) {
        try {
          ob.gain = parse(*s, vars);
        } catch (const Error& e) {
          throw ConfigError(std::string("observer.kE: ") + e.what(), line_of(k));
        }
      } else {
        ob.gain = Loader::number(k, "observer.kE");
        if (std::get<double>(ob.gain) < 0) throw ConfigError("observer.kE must be nonnegative", line_of(k));
      }
    }
    auto positive = [&](const char* name) -> std::optional<double> {
      const toml::node* v = Loader::key(o, name);
      if (!v) return std::nullopt;
      double x = Loader::number(v, Loader::field("observer", name));
      if (!(x > 0)) throw ConfigError(Loader::field("observer", name) + " must be positive", line_of(v));
      return x;
    };
    ob.q = positive("q");
    ob.region = positive("E");
    if (auto t = positive("T")) ob.T = *t;
    if (auto t = positive("dt")) ob.dt = *t;
    auto state = [&](const char* name, Vec& dst) {
      if (const toml::node* v = Loader::key(o, name)) {
        auto xs = Loader::numbers(v, Loader::field("observer", name));
        if (static_cast<int>(xs.size()) != cfg.n)
          throw ConfigError(Loader::field("observer", name) + " needs n entries", line_of(v));
        dst = to_vec(xs);
      }
    };
    state("x0", ob.x0);
    state("xhat0", ob.xhat0);
  }

  auto& ck = cfg.checks;
  if (const toml::table* c = L.section("checks", false)) {
    auto tol = [&](const char* name, double& dst) {
      if (const toml::node* v = Loader::key(c, name)) {
        dst = Loader::number(v, Loader::field("checks", name));
        if (!(dst > 0)) throw ConfigError(Loader::field("checks", name) + " must be positive", line_of(v));
      }
    };
    tol("tol_negativity", ck.tol_negativity);
    tol("tol_h2", ck.tol_h2);
    tol("tol_totally_geodesic", ck.tol_totally_geodesic);
    tol("tol_convexity", ck.tol_convexity);
    tol("tol_ltv", ck.tol_ltv);
    if (const toml::node* v = Loader::key(c, "convexity_pairs"))
      ck.convexity_pairs = Loader::integer(v, "checks.convexity_pairs");
    if (const toml::node* v = Loader::key(c, "xi_count")) ck.xi_count = Loader::integer(v, "checks.xi_count");
    if (const toml::node* v = Loader::key(c, "level")) {
      auto ys = Loader::numbers(v, "checks.level");
      if (static_cast<int>(ys.size()) != cfg.m) throw ConfigError("checks.level needs m entries", line_of(v));
      ck.level = to_vec(ys);
    }
    if (const toml::node* v = Loader::key(c, "run")) {
      ck.run = Loader::strings(v, "checks.run");
      for (const std::string& s : ck.run)
        if (std::find(subcommand_names().begin(), subcommand_names().end(), s) == subcommand_names().end())
          throw ConfigError("checks.run: unknown check '" + s + "'", line_of(v));
    }
  }
  return cfg;
}

ProblemConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path, 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Output helpers

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

std::string vec_text(const std::vector<double>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + ")";
}

json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number_json(x));
  return a;
}

json report_json(const ConditionReport& r) {
  json j;
  j["check"] = r.check;
  j["verdict"] = to_string(r.verdict);
  j["worst_residual"] = number_json(r.worst_residual);
  j["tolerance"] = number_json(r.tolerance);
  j["samples"] = r.grid_size;
  j["witness_point"] = vector_json(r.witness_point);
  j["witness_direction"] = r.witness_direction ? vector_json(*r.witness_direction) : json(nullptr);
  j["witness_time"] = r.witness_time ? number_json(*r.witness_time) : json(nullptr);
  json rank = json::array();
  for (const auto& p : r.rank_deficient_points) rank.push_back(vector_json(p));
  j["rank_deficient_points"] = rank;
  j["notes"] = r.notes;
  return j;
}

void print_report(std::ostream& os, const ConditionReport& r) {
  os << r.check << ": " << to_string(r.verdict) << "\n";
  os << "  worst residual " << num(r.worst_residual) << " (tolerance " << num(r.tolerance) << ", "
     << r.grid_size << " samples)\n";
  if (!r.witness_point.empty()) {
    os << "  witness x = " << vec_text(r.witness_point);
    if (r.witness_direction) os << ", direction " << vec_text(*r.witness_direction);
    if (r.witness_time) os << ", t = " << num(*r.witness_time);
    os << "\n";
  }
  if (!r.rank_deficient_points.empty())
    os << "  " << r.rank_deficient_points.size() << " points where dh/dx loses rank\n";
  for (const std::string& n : r.notes) os << "  note: " << n << "\n";
}

/// Collected results of one subcommand run.
struct Run {
  std::string name;
  std::string hash;
  std::uint64_t seed = 0;
  std::vector<ConditionReport> reports;
  json values = json::object();
  std::vector<std::string> artifacts;
  bool success = true;  // for subcommands without checker semantics

  int exit_code() const {
    for (const auto& r : reports)
      if (r.verdict == Verdict::fail) return kExitCheckFailed;
    return success ? kExitOk : kExitCheckFailed;
  }

  json to_json() const {
    json j;
    j["subcommand"] = name;
    j["config_hash"] = hash;
    j["seed"] = seed;
    j["exit_code"] = exit_code();
    json reps = json::array();
    for (const auto& r : reports) reps.push_back(report_json(r));
    j["checks"] = reps;
    j["values"] = values;
    j["artifacts"] = artifacts;
    return j;
  }
};

Vec require_point(const std::optional<std::vector<double>>& p, const char* flag, int n) {
  if (!p) throw ValidationError(std::string("--") + flag + " is required");
  if (static_cast<int>(p->size()) != n)
    throw ValidationError(std::string("--") + flag + " needs " + std::to_string(n) + " coordinates");
  return from_std(*p);
}

std::vector<Vec> seeded_directions(int n, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec> out;
  while (static_cast<int>(out.size()) < count) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    if (v.norm() > 1e-8) out.push_back(v / v.norm());
  }
  return out;
}

ShootingOptions shooting_for(const CliOptions& o) {
  ShootingOptions s;
  s.seed = o.seed;
  if (o.tol) s.ivp_tol = *o.tol;
  return s;
}

ObserverSpec observer_from(const ProblemConfig& cfg, const CliOptions& o) {
  ObserverSpec s{cfg.metric, cfg.sys, cfg.observer.gain, cfg.observer.region};
  if (o.kE) s.gain = *o.kE;
  if (o.E) s.region = *o.E;
  s.validate();
  return s;
}

SimOptions sim_for(const ProblemConfig& cfg, const CliOptions& o) {
  SimOptions s;
  if (o.tol) s.tol = *o.tol;
  s.dt = cfg.observer.dt;
  s.box = cfg.domain;
  return s;
}

json trace_summary(const SimulationTrace& tr) {
  json j;
  j["samples"] = tr.size();
  j["d0"] = tr.has_distance() ? number_json(tr.d.front()) : json(nullptr);
  j["d_final"] = tr.has_distance() ? number_json(tr.d.back()) : json(nullptr);
  std::size_t missing = 0;
  for (double d : tr.d) missing += std::isfinite(d) ? 0 : 1;
  j["missing_distance"] = missing;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

using Handler = std::function<void(const ProblemConfig*, const CliOptions&, Run&, std::ostream&)>;

const ProblemConfig& need(const ProblemConfig* cfg) {
  if (!cfg) throw ValidationError("--config is required for this subcommand");
  return *cfg;
}

Grid check_grid(const ProblemConfig& cfg) { return Grid(cfg.check_box, cfg.grid_per_axis); }

void cmd_check_metric(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  Grid grid = check_grid(cfg);
  struct Eig {
    double lo, hi;
  };
  auto eig = parallel_map(grid.size(), [&](std::size_t i) {
    Vec ev = sym_eigenvalues(cfg.metric.value(grid.point(i)));
    return Eig{ev(0), ev(ev.size() - 1)};
  });
  ConditionReport spd;
  spd.check = "positive-definite";
  spd.grid_size = grid.size();
  spd.tolerance = kSpdRelTol;
  std::size_t worst = 0;
  double p_lo = eig[0].lo, p_hi = eig[0].hi;
  bool ok = true;
  for (std::size_t i = 0; i < eig.size(); ++i) {
    double margin = eig[i].lo - kSpdRelTol * std::max(1.0, eig[i].hi);
    double best = eig[worst].lo - kSpdRelTol * std::max(1.0, eig[worst].hi);
    if (margin < best) worst = i;
    if (!(margin > 0)) ok = false;
    p_lo = std::min(p_lo, eig[i].lo);
    p_hi = std::max(p_hi, eig[i].hi);
  }
  spd.worst_residual = -eig[worst].lo;
  spd.witness_point = to_std(grid.point(worst));
  spd.verdict = ok ? Verdict::pass : Verdict::fail;
  run.reports.push_back(spd);
  run.values["lambda_min"] = p_lo;
  run.values["lambda_max"] = p_hi;

  std::vector<double> radii{1, 2, 4, 8, 16, 32};
  CompletenessOptions co;
  co.seed = o.seed;
  CompletenessProbe probe = completeness_probe(cfg.metric, radii, co);
  json rows = json::array();
  for (const auto& r : probe.rows)
    rows.push_back({{"radius", r.radius}, {"p_min", number_json(r.p_min)}, {"growth", number_json(r.growth)}});
  run.values["completeness"] = rows;
  run.reports.push_back(probe.report);
  out << "eigenvalues of P on the check grid: [" << num(p_lo) << ", " << num(p_hi) << "]\n";
}

void cmd_check_negativity(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream&) {
  const ProblemConfig& cfg = need(c);
  run.reports.push_back(check_conditional_negativity(cfg.metric, cfg.sys, check_grid(cfg),
                                                     o.tol.value_or(cfg.checks.tol_negativity)));
}

RhoFit fit_for(const ProblemConfig& cfg, const CliOptions& o) {
  std::optional<double> q = o.q ? o.q : cfg.observer.q;
  return fit_rho_q(cfg.metric, cfg.sys, check_grid(cfg), q);
}

void cmd_fit_rho_q(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  RhoFit fit;
  try {
    fit = fit_for(cfg, o);
  } catch (const Infeasible& e) {
    ConditionReport r;
    r.check = "fit-rho-q";
    r.verdict = Verdict::fail;
    r.witness_point = e.point();
    r.notes.push_back("no rho up to the cap satisfies the inequality at q = 0");
    run.reports.push_back(r);
    return;
  }
  ConditionReport h2 = check_h2(cfg.metric, cfg.sys, fit.rho, fit.q_target, check_grid(cfg),
                                o.tol.value_or(cfg.checks.tol_h2));
  run.reports.push_back(fit.report);
  run.reports.push_back(h2);
  run.values["q_achieved"] = fit.q_achieved;
  run.values["q"] = fit.q_target;
  run.values["rho_max"] = fit.rho.max();
  out << "q_achieved = " << num(fit.q_achieved) << ", q = " << num(fit.q_target)
      << ", max rho = " << num(fit.rho.max()) << "\n";
}

void cmd_check_totally_geodesic(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream&) {
  const ProblemConfig& cfg = need(c);
  run.reports.push_back(check_totally_geodesic(cfg.metric, cfg.sys, check_grid(cfg),
                                               o.tol.value_or(cfg.checks.tol_totally_geodesic)));
}

void cmd_check_convexity(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  Vec centre = 0.5 * (from_std(cfg.check_box.lower) + from_std(cfg.check_box.upper));
  Vec y = cfg.checks.level ? *cfg.checks.level : cfg.sys.h(centre);
  auto pairs = sample_level_set_pairs(cfg.sys, y, cfg.check_box, cfg.checks.convexity_pairs, o.seed);
  out << "level set h = " << vec_text(to_std(y)) << ", " << pairs.size() << " pairs\n";
  run.values["level"] = vector_json(to_std(y));
  run.reports.push_back(check_geodesic_convexity_spot(cfg.metric, cfg.sys, y, pairs,
                                                      o.tol.value_or(cfg.checks.tol_convexity),
                                                      shooting_for(o)));
}

void cmd_check_detectability(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  RhoFit fit = fit_for(cfg, o);
  const double T = o.T.value_or(cfg.observer.T);
  TrajectoryLinearization lin = linearize_along(cfg.sys, cfg.metric, cfg.observer.x0, T, cfg.observer.dt);
  GainSchedule gain = detect_gain(lin, fit.rho);
  LtvOptions lo;
  lo.tol = o.tol.value_or(cfg.checks.tol_ltv);
  ConditionReport r = check_ltv_stability(lin, gain, fit.q_target, seeded_directions(cfg.n, cfg.checks.xi_count, o.seed), lo);
  if (!gain.extrapolated_times.empty())
    r.notes.push_back("trajectory leaves the rho table at t = " + num(gain.extrapolated_times.front()));
  run.reports.push_back(r);
  run.values["q"] = fit.q_target;
  run.values["sup_gain_norm"] = gain.sup_norm;
  run.values["p_lower"] = lin.p_lower;
  run.values["p_upper"] = lin.p_upper;
  out << "q = " << num(fit.q_target) << ", sup |K| = " << num(gain.sup_norm) << "\n";
}

void write_file(const CliOptions& o, Run& run, const std::string& name,
                const std::function<void(std::ostream&)>& body) {
  if (!o.out) return;
  std::filesystem::create_directories(*o.out);
  std::filesystem::path p = std::filesystem::path(*o.out) / name;
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot write " + p.string());
  body(f);
  run.artifacts.push_back(name);
}

void cmd_geodesic(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  Vec a = require_point(o.from, "from", cfg.n), b = require_point(o.to, "to", cfg.n);
  MinimalGeodesic g = minimal_geodesic(cfg.geodesic_metric(), a, b, shooting_for(o));
  run.values["length"] = g.length;
  run.values["v0"] = vector_json(to_std(g.v0));
  run.values["ambiguous"] = g.ambiguous;
  run.values["converged_candidates"] = g.converged_candidates;
  out << "length " << num(g.length) << ", initial direction " << vec_text(to_std(g.v0)) << "\n";
  if (g.ambiguous) out << "note: another minimal geodesic of the same length was found\n";
  write_file(o, run, "geodesic.csv", [&](std::ostream& f) {
    f << "s";
    for (int i = 1; i <= cfg.n; ++i) f << ",x" << i;
    for (int i = 1; i <= cfg.n; ++i) f << ",v" << i;
    f << "\n";
    for (std::size_t k = 0; k < g.path.size(); ++k) {
      f << num(g.path.s[k]);
      for (int i = 0; i < cfg.n; ++i) f << "," << num(g.path.position[k](i));
      for (int i = 0; i < cfg.n; ++i) f << "," << num(g.path.velocity[k](i));
      f << "\n";
    }
  });
}

void cmd_distance(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  Vec a = require_point(o.from, "from", cfg.n), b = require_point(o.to, "to", cfg.n);
  double d = distance(cfg.geodesic_metric(), a, b, shooting_for(o));
  run.values["distance"] = d;
  out << num(d) << "\n";
}

SimulationTrace run_simulation(const ProblemConfig& cfg, const CliOptions& o, const ObserverSpec& spec) {
  const double T = o.T.value_or(cfg.observer.T);
  SimulationTrace tr = simulate(cfg.sys, spec_observer(spec), cfg.observer.x0, cfg.observer.xhat0, T, sim_for(cfg, o));
  distance_trace(spec.metric, tr, shooting_for(o));
  return tr;
}

void cmd_simulate(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  SimulationTrace tr = run_simulation(cfg, o, observer_from(cfg, o));
  run.values["trace"] = trace_summary(tr);
  out << tr.size() << " samples, d(0) = " << num(tr.d.front()) << ", d(T) = " << num(tr.d.back()) << "\n";
  write_file(o, run, "trace.csv", [&](std::ostream& f) { write_trace_csv(f, tr); });
}

void cmd_verify_decay(const ProblemConfig* c, const CliOptions& o, Run& run, std::ostream& out) {
  const ProblemConfig& cfg = need(c);
  ObserverSpec spec = observer_from(cfg, o);
  double q;
  if (o.q) {
    q = *o.q;
  } else if (cfg.observer.q) {
    q = *cfg.observer.q;
  } else {
    q = fit_rho_q(cfg.metric, cfg.sys, check_grid(cfg)).q_target;
    out << "using the fitted q = " << num(q) << "\n";
  }
  SimulationTrace tr = run_simulation(cfg, o, spec);
  run.reports.push_back(verify_decay(tr, q, spec.region, cfg.domain));
  run.values["q"] = q;
  run.values["trace"] = trace_summary(tr);
  write_file(o, run, "trace.csv", [&](std::ostream& f) { write_trace_csv(f, tr); });
}

const std::map<std::string, Handler>& handlers();

void cmd_demo_example1(const ProblemConfig* cfg, const CliOptions& o, Run& run, std::ostream& out) {
  Example1 ex = builtin_example1();
  Vec x0(2), xh0(2);
  x0 << 0, 1;
  xh0 << 1, 0;
  const double T = o.T.value_or(5.0);
  SimOptions so;
  so.tol = o.tol.value_or(1e-9);
  so.dt = 0.05;
  SimulationTrace tr = simulate(ex.sys, ex.reference, x0, xh0, T, so);
  attach_oracle(tr, ex.V);
  distance_trace(ex.distance_metric, tr, shooting_for(o));

  ConditionReport r;
  r.check = "lyapunov-decay";
  r.tolerance = 1e-6;
  r.grid_size = tr.size();
  const auto& v = *tr.v;
  std::size_t worst = 0;
  double worst_err = 0.0;
  for (std::size_t j = 0; j < tr.size(); ++j) {
    double e = std::abs(v[j] - v[0] * std::exp(-tr.t[j])) / v[0];
    if (e > worst_err) {
      worst_err = e;
      worst = j;
    }
  }
  r.worst_residual = worst_err;
  r.witness_time = tr.t[worst];
  r.witness_point = to_std(tr.x[worst]);
  r.verdict = worst_err <= r.tolerance ? Verdict::pass : Verdict::fail;
  r.notes.push_back("max_t |V(t) - V(0) exp(-t)| / V(0)");
  run.reports.push_back(r);
  run.values["V0"] = v[0];
  run.values["trace"] = trace_summary(tr);
  out << "reference observer from x0 = (0, 1), xhat0 = (1, 0) over [0, " << num(T) << "]\n";
  write_file(o, run, "trace.csv", [&](std::ostream& f) { write_trace_csv(f, tr); });

  if (!cfg) return;
  for (const std::string& name : cfg->checks.run) {
    if (name == "demo-example1" || name == "geodesic" || name == "distance") continue;
    out << "-- " << name << "\n";
    handlers().at(name)(cfg, o, run, out);
  }
}

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table{
      {"check-metric", cmd_check_metric},
      {"check-negativity", cmd_check_negativity},
      {"fit-rho-q", cmd_fit_rho_q},
      {"check-totally-geodesic", cmd_check_totally_geodesic},
      {"check-convexity", cmd_check_convexity},
      {"check-detectability", cmd_check_detectability},
      {"geodesic", cmd_geodesic},
      {"distance", cmd_distance},
      {"simulate", cmd_simulate},
      {"verify-decay", cmd_verify_decay},
      {"demo-example1", cmd_demo_example1},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, h] : handlers()) v.push_back(k);
    return v;
  }();
  return names;
}

void write_trace_csv(std::ostream& os, const SimulationTrace& tr) {
  const std::size_t n = tr.x.empty() ? 0 : static_cast<std::size_t>(tr.x.front().size());
  const std::size_t m = tr.y.empty() ? 0 : static_cast<std::size_t>(tr.y.front().size());
  os << "t";
  for (std::size_t i = 1; i <= n; ++i) os << ",x" << i;
  for (std::size_t i = 1; i <= n; ++i) os << ",xhat" << i;
  for (std::size_t i = 1; i <= m; ++i) os << ",y" << i;
  os << ",d,V,flags\n";
  for (std::size_t j = 0; j < tr.size(); ++j) {
    os << num(tr.t[j]);
    for (std::size_t i = 0; i < n; ++i) os << "," << num(tr.x[j](i));
    for (std::size_t i = 0; i < n; ++i) os << "," << num(tr.xhat[j](i));
    for (std::size_t i = 0; i < m; ++i) os << "," << num(tr.y[j](i));
    os << "," << (tr.has_distance() ? num(tr.d[j]) : "");
    os << "," << (tr.v ? num((*tr.v)[j]) : "");
    os << "," << flag_string(j < tr.flags.size() ? tr.flags[j] : 0) << "\n";
  }
}

int run_subcommand(const std::string& name, const CliOptions& opts, std::ostream& out,
                   std::ostream& err) {
  auto it = handlers().find(name);
  if (it == handlers().end()) {
    err << "unknown subcommand '" << name << "'\n";
    return kExitError;
  }
  try {
    set_thread_limit(opts.threads);
    std::optional<ProblemConfig> cfg;
    if (opts.config) cfg = load_config(*opts.config);
    Run run;
    run.name = name;
    run.seed = opts.seed;
    run.hash = config_hash(cfg ? cfg->source : std::string());
    it->second(cfg ? &*cfg : nullptr, opts, run, out);
    for (const auto& r : run.reports) print_report(out, r);
    const int code = run.exit_code();
    write_file(opts, run, "report.json", [&](std::ostream& f) {
      Run copy = run;
      copy.artifacts.push_back("report.json");
      f << copy.to_json().dump(2) << "\n";
    });
    out << (code == kExitOk ? "PASS" : "FAIL") << "\n";
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Riemannian observer design checks and simulations"};
  std::string name;
  CliOptions o;
  std::string from, to;
  std::string list;
  for (const auto& s : subcommand_names()) list += "\n  " + s;
  app.add_option("subcommand", name, "One of:" + list)->required();
  app.add_option("--config", o.config, "Problem configuration (TOML)");
  app.add_option("--seed", o.seed, "Seed for all sampling");
  app.add_option("--threads", o.threads, "Worker thread cap (0 = runtime default)");
  app.add_option("--tol", o.tol, "Checker tolerance, or integration tolerance for simulations");
  app.add_option("--out", o.out, "Directory for report.json and CSV traces");
  app.add_option("--from", from, "Start point, comma separated");
  app.add_option("--to", to, "End point, comma separated");
  app.add_option("--T", o.T, "Simulation horizon");
  app.add_option("--kE", o.kE, "Observer gain");
  app.add_option("--q", o.q, "Decay rate");
  app.add_option("--E", o.E, "Region bound on the distance");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }
  auto point = [&](const std::string& text, std::optional<std::vector<double>>& dst) -> bool {
    if (text.empty()) return true;
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (item.find_first_not_of(" \t", used) != std::string::npos) return false;
      } catch (const std::exception&) {
        return false;
      }
    }
    dst = v;
    return true;
  };
  if (!point(from, o.from) || !point(to, o.to)) {
    err << "error: --from/--to expect comma separated numbers\n";
    return kExitError;
  }
  return run_subcommand(name, o, out, err);
}

}  // namespace riemobs
