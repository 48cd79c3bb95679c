// Serial against OpenMP-parallel runs of the data-parallel kernels.
// Argument 0 selects the path: 0 = serial, 1 = parallel.

#include "riemobs/conditions.hpp"
#include "riemobs/metric.hpp"
#include "riemobs/observer_sim.hpp"

#include <benchmark/benchmark.h>

using namespace riemobs;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

const Example1& example() {
  static const Example1 ex = builtin_example1();
  return ex;
}

void BM_ConditionalNegativity(benchmark::State& s) {
  Grid grid(Box::cube(2, -3, 3), 81);
  for (auto _ : s)
    benchmark::DoNotOptimize(check_conditional_negativity(example().metric, example().sys, grid, 1e-9, exec_of(s)));
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(grid.size()));
}

void BM_TotallyGeodesic(benchmark::State& s) {
  Grid grid(Box::cube(2, -3, 3), 81);
  for (auto _ : s)
    benchmark::DoNotOptimize(check_totally_geodesic(example().metric, example().sys, grid, 1e-8, exec_of(s)));
  s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(grid.size()));
}

void BM_FitRhoQ(benchmark::State& s) {
  Grid grid(Box::cube(2, -2, 2), 41);
  FitOptions o;
  o.exec = exec_of(s);
  for (auto _ : s) benchmark::DoNotOptimize(fit_rho_q(example().metric, example().sys, grid, std::nullopt, o));
}

void BM_CompletenessProbe(benchmark::State& s) {
  std::vector<double> radii{1, 2, 4, 8, 16};
  CompletenessOptions o;
  o.exec = exec_of(s);
  for (auto _ : s) benchmark::DoNotOptimize(completeness_probe(example().metric, radii, o));
}

void BM_MultiStartGeodesic(benchmark::State& s) {
  ShootingOptions o;
  o.restarts = 8;
  o.exec = exec_of(s);
  Vec a(2), b(2);
  a << 0.3, -1.0;
  b << -1.2, 0.8;
  for (auto _ : s) benchmark::DoNotOptimize(minimal_geodesic(example().metric, a, b, o));
}

void BM_ConvexitySpot(benchmark::State& s) {
  Vec y = Vec::Constant(1, 0.5);
  auto pairs = sample_level_set_pairs(example().sys, y, Box::cube(2, -2, 2), 16, 1);
  for (auto _ : s)
    benchmark::DoNotOptimize(
        check_geodesic_convexity_spot(example().metric, example().sys, y, pairs, 1e-6, {}, exec_of(s)));
}

}  // namespace

BENCHMARK(BM_ConditionalNegativity)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TotallyGeodesic)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitRhoQ)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CompletenessProbe)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MultiStartGeodesic)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvexitySpot)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
