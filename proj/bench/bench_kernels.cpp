// Serial references against the OpenMP kernels. Arg(0) is the serial path,
// Arg(1) the parallel one; the thread count is whatever OpenMP picks.

#include <benchmark/benchmark.h>

#include "fieldest/crlb.hpp"
#include "fieldest/experiments.hpp"

using namespace fieldest;

namespace {

const GaussianBell kBell;

struct Setup {
  ExperimentConfig cfg;
  CellSetup cell;
  SensorNetwork net;
};

Setup quantized_setup(int k, int m) {
  ExperimentConfig cfg;
  cfg.k = {k};
  cfg.m = {m};
  cfg.crlb_enabled = false;
  CellSetup cell = prepare_cell(cfg, expand_cells(cfg).front());
  SensorNetwork net = trial_network(cell, cfg, 0);
  return {cfg, std::move(cell), std::move(net)};
}

void BM_QuadratureFisher(benchmark::State& state) {
  const Setup s = quantized_setup(40, 8);
  const bool parallel = state.range(0) == 1;
  for (auto _ : state) {
    const FisherMatrix f =
        parallel ? fisher_quantized_simpson(s.net, kBell, s.cfg.truth, s.cell.quantizer, s.cell.bits, s.cell.eta2, 41)
                 : serial::fisher_quantized_simpson(s.net, kBell, s.cfg.truth, s.cell.quantizer, s.cell.bits,
                                                    s.cell.eta2, 41);
    benchmark::DoNotOptimize(f.entries.data());
  }
}
BENCHMARK(BM_QuadratureFisher)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SeriesFisher(benchmark::State& state) {
  const Setup s = quantized_setup(10, 4);
  const bool parallel = state.range(0) == 1;
  for (auto _ : state) {
    const FisherMatrix f =
        parallel ? fisher_quantized_series(s.net, kBell, s.cfg.truth, s.cell.quantizer, s.cell.bits, s.cell.eta2, 6)
                 : serial::fisher_quantized_series(s.net, kBell, s.cfg.truth, s.cell.quantizer, s.cell.bits,
                                                   s.cell.eta2, 6);
    benchmark::DoNotOptimize(f.entries.data());
  }
}
BENCHMARK(BM_SeriesFisher)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Campaign(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.k = {40};
  cfg.m = {8};
  cfg.trials = 40;
  cfg.crlb_enabled = false;
  cfg.workers = state.range(0) == 1 ? 0 : 1;
  for (auto _ : state) {
    const MetricsReport r = run_campaign(cfg);
    benchmark::DoNotOptimize(r.cells.data());
  }
}
BENCHMARK(BM_Campaign)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
