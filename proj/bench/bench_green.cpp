#include "aphase/green.hpp"
#include "aphase/phase.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace aphase;

namespace {

const SystemSpec& torus() {
  static const SystemSpec sys = builtin_torus_product({{1.0, 1.0}, {1.5, 0.5}});
  return sys;
}

// Kernel over [0, T] with dt = 0.01, T = state.range(0).
struct KernelFixture {
  explicit KernelFixture(double horizon)
      : kernel(torus(), torus().manifold.seed, horizon, 0.01, make_splitting_provider(torus())) {
    for (double t : kernel.nodes()) {
      Vec v(4);
      v << std::sin(3 * t), std::exp(-t), std::cos(t) * t, 1.0 / (1.0 + t);
      forcing.push_back(v);
    }
  }
  GreenKernel kernel;
  std::vector<Vec> forcing;
};

void BM_GreenApplySerial(benchmark::State& state) {
  const KernelFixture fx(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fx.kernel.apply_serial(fx.forcing));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(fx.kernel.size()));
}

void BM_GreenApplyParallel(benchmark::State& state) {
  const KernelFixture fx(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fx.kernel.apply_parallel(fx.forcing));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(fx.kernel.size()));
}

void BM_GreenBuild(benchmark::State& state) {
  for (auto _ : state) {
    const GreenKernel k(torus(), torus().manifold.seed, static_cast<double>(state.range(0)), 0.01,
                        make_splitting_provider(torus()));
    benchmark::DoNotOptimize(k.size());
  }
}

void BM_PhaseBatch(benchmark::State& state) {
  static const SystemSpec sys = builtin_shear_cycle(1.0, 1.0);
  static const HyperbolicConstants k = estimate_constants(sys, sys.manifold);
  std::vector<Vec> pts;
  for (int i = 0; i < 8; ++i) pts.push_back(polar_point(0.8 + 0.05 * i, 0.7 * i));
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    // Fresh solver per iteration so kernel caches do not carry over.
    const PhaseSolver solver(sys, k);
    benchmark::DoNotOptimize(solver.solve_batch(pts, workers));
  }
}

}  // namespace

BENCHMARK(BM_GreenApplySerial)->Arg(6)->Arg(12)->Arg(24)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_GreenApplyParallel)->Arg(6)->Arg(12)->Arg(24)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_GreenBuild)->Arg(12)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PhaseBatch)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
