#include <benchmark/benchmark.h>

#include "eigoverlap/montecarlo.hpp"
#include "eigoverlap/overlap_theory.hpp"
#include "eigoverlap/resolvent.hpp"

using namespace eigoverlap;

static void BM_SolveAdaptive(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const BareSpectrum s = make_gaussian_spectrum(n, 1.0, 1);
  const double sigma_w = 0.2;
  for (auto _ : state) {
    StieltjesSolution sol = solve_adaptive(s, sigma_w, SolverConfig::defaults(sigma_w));
    benchmark::DoNotOptimize(sol.grid().size());
  }
}
BENCHMARK(BM_SolveAdaptive)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_SolveM(benchmark::State& state) {
  const BareSpectrum s = make_gaussian_spectrum(512, 1.0, 1);
  const SolverConfig cfg = SolverConfig::defaults(0.2);
  for (auto _ : state) benchmark::DoNotOptimize(solve_m(s, 0.2, {0.1, 1e-6}, cfg));
}
BENCHMARK(BM_SolveM)->Unit(benchmark::kMicrosecond);

static void BM_OverlapTheory(benchmark::State& state) {
  const BareSpectrum s = make_gaussian_spectrum(256, 1.0, 1);
  const StieltjesSolution sol = solve_adaptive(s, 0.2, SolverConfig::defaults(0.2));
  for (auto _ : state) {
    OverlapTheory th(sol);
    benchmark::DoNotOptimize(th.second_moment(128, 128));
  }
}
BENCHMARK(BM_OverlapTheory)->Unit(benchmark::kMillisecond);

static void BM_Realization(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Ensemble kind = state.range(1) ? Ensemble::GUE : Ensemble::GOE;
  const BareSpectrum s = make_gaussian_spectrum(n, 1.0, 1);
  std::uint64_t index = 0;
  for (auto _ : state) {
    RealizationResult r = run_realization(s, {kind, 0.4}, index++, 2);
    benchmark::DoNotOptimize(r.eigenvalues.data());
  }
}
BENCHMARK(BM_Realization)->Args({128, 0})->Args({128, 1})->Args({256, 0})->Unit(benchmark::kMillisecond);

static void BM_Accumulate(benchmark::State& state) {
  const std::size_t n = 128;
  const BareSpectrum s = make_gaussian_spectrum(n, 1.0, 1);
  TrackingConfig cfg;
  cfg.dimension = n;
  if (state.range(0)) {
    cfg.cyclic_pairs = {{32, 96}};
    cfg.factorized_pairs = {{32, 96}};
    cfg.green_probes = {{GreenProbe::Kind::Extradiag, 32, 96, {0.1, 0.05}, {0.1, -0.05}},
                        {GreenProbe::Kind::Diag, 32, 96, {0.1, 0.05}, {-0.4, -0.05}}};
  }
  const RealizationResult r = run_realization(s, {Ensemble::GOE, 0.4}, 0, 2);
  MomentAccumulator acc(cfg);
  for (auto _ : state) acc.accumulate(r);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Accumulate)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
