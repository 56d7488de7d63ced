// Timing of the hot paths: obstacle solve, layer replacement, exact basis,
// Weiss quadrature, sequence batches.

#include <benchmark/benchmark.h>

#include "thinfb/fixtures.hpp"
#include "thinfb/monitors.hpp"
#include "thinfb/polyhom.hpp"
#include "thinfb/seqlab.hpp"
#include "thinfb/sphere_layer.hpp"
#include "thinfb/vi_solver.hpp"

using namespace thinfb;

static void BM_SolveU32(benchmark::State& state) {
  const Fixture f = make_fixture("u32");
  const Grid grid(3, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    SolveResult r = solve_top(f.data, grid);
    benchmark::DoNotOptimize(r.u.values.data());
    state.counters["sweeps"] = r.report.iterations;
  }
}
BENCHMARK(BM_SolveU32)->Arg(17)->Arg(33)->Arg(65)->Unit(benchmark::kMillisecond);

static void BM_Basis(benchmark::State& state) {
  const int degree = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(basis(3, degree, natural_parity(degree)));
}
BENCHMARK(BM_Basis)->DenseRange(2, 6, 2)->Unit(benchmark::kMicrosecond);

static void BM_ReplaceX1X2(benchmark::State& state) {
  const Fixture f = make_fixture("x1x2");
  LayerConfig lc;
  lc.longitudes = static_cast<int>(state.range(0));
  const LayerGeometry geom = choose_eta(3, f.p.degree(), lc);
  for (auto _ : state) {
    ReplacementBundle b = replace(f.p, geom);
    benchmark::DoNotOptimize(b.kappa);
  }
}
BENCHMARK(BM_ReplaceX1X2)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Weiss(benchmark::State& state) {
  const Fixture f = make_fixture("u32");
  const GridField u = solve_top(f.data, Grid(3, 33)).u;
  const double r = state.range(0) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(weiss(u, 1.5, r));
}
BENCHMARK(BM_Weiss)->Arg(30)->Arg(60)->Arg(90)->Unit(benchmark::kMillisecond);

static void BM_SeqBatch(benchmark::State& state) {
  SeqParams p;
  p.gamma = state.range(0) / 100.0;
  for (auto _ : state) {
    BatchReport b = verify_batch(p, 1000, 1);
    benchmark::DoNotOptimize(b.min_c);
  }
}
BENCHMARK(BM_SeqBatch)->Arg(100)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
