#pragma once

#include "riemobs/domain.hpp"
#include "riemobs/metric.hpp"
#include "riemobs/observer_sim.hpp"
#include "riemobs/report.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace riemobs {

/// A problem description loaded from a TOML configuration file.
struct ProblemConfig {
  std::string source;  // raw file contents, hashed into every report
  int n = 0;
  int m = 0;
  DynamicalSystem sys;
  MetricField metric;
  std::optional<MetricField> distance_metric;
  std::optional<Diffeomorphism> diffeo;

  Box domain;
  int grid_per_axis = Grid::kDefaultPerAxis;
  Box check_box;  // grid checks and rho fit; defaults to the domain

  struct Observer {
    std::variant<double, Expr> gain = 1.0;
    std::optional<double> q;
    std::optional<double> region;
    double T = 5.0;
    double dt = 0.01;
    Vec x0, xhat0;
  } observer;

  struct Checks {
    double tol_negativity = 1e-9;
    double tol_h2 = 1e-9;
    double tol_totally_geodesic = 1e-8;
    double tol_convexity = 1e-6;
    double tol_ltv = 1e-6;
    int convexity_pairs = 10;
    std::optional<Vec> level;
    int xi_count = 8;
    std::vector<std::string> run;
  } checks;

  /// Distance computations use distance_metric when the file provides one.
  const MetricField& geodesic_metric() const { return distance_metric ? *distance_metric : metric; }
};

ProblemConfig parse_config(const std::string& text);
ProblemConfig load_config(const std::string& path);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string config_hash(const std::string& text);

struct CliOptions {
  std::optional<std::string> config;
  std::uint64_t seed = 0;
  int threads = 0;
  std::optional<double> tol;
  std::optional<std::string> out;
  std::optional<std::vector<double>> from, to;
  std::optional<double> T, kE, q, E;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitError = 2;

const std::vector<std::string>& subcommand_names();

/// Runs one subcommand; human-readable output goes to `out`, diagnostics to `err`.
int run_subcommand(const std::string& name, const CliOptions& opts, std::ostream& out,
                   std::ostream& err);

/// Full command line entry point (argv[0] is the program name).
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

void write_trace_csv(std::ostream& os, const SimulationTrace& trace);

}  // namespace riemobs
