#include <benchmark/benchmark.h>

#include <random>

#include "diffqg/closures.hpp"
#include "diffqg/commands.hpp"
#include "diffqg/qg.hpp"
#include "diffqg/training.hpp"

using namespace diffqg;

namespace {

SpectralField random_state(const Grid& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(g.size());
  for (double& x : v) x = normal(rng);
  return dealias(to_spectral(RealField(g, std::move(v))));
}

CnnArchitecture desk_arch() {
  CnnArchitecture a;
  a.depth = 4;
  a.width = 16;
  a.kernel = 5;
  return a;
}

void BM_Transform(benchmark::State& state) {
  const Grid g(static_cast<int>(state.range(0)));
  const SpectralField f = random_state(g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(to_spectral(to_real(f)));
}
BENCHMARK(BM_Transform)->Arg(32)->Arg(256);

void BM_Jacobian(benchmark::State& state) {
  const Grid g(static_cast<int>(state.range(0)));
  const SpectralField w = random_state(g, 2);
  const SpectralField psi = inv_laplacian(w);
  for (auto _ : state) benchmark::DoNotOptimize(jacobian(psi, w));
}
BENCHMARK(BM_Jacobian)->Arg(32)->Arg(256);

void BM_Rk4Step(benchmark::State& state) {
  const Grid g(static_cast<int>(state.range(0)));
  Dynamics dyn;
  QGState s{random_state(g, 3), 0.0};
  for (auto _ : state) s = step_rk4(s, dyn);
}
BENCHMARK(BM_Rk4Step)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_CnnForward(benchmark::State& state) {
  const Grid g(32);
  const CnnParams p = cnn_init(desk_arch(), 1);
  const RealField x = to_real(random_state(g, 4));
  for (auto _ : state) benchmark::DoNotOptimize(cnn_apply(x, p));
}
BENCHMARK(BM_CnnForward)->Unit(benchmark::kMillisecond);

void BM_AposterioriGradient(benchmark::State& state) {
  const Grid g(32);
  const int n = static_cast<int>(state.range(0));
  Dynamics dyn;
  dyn.params.nu = 5e-4;
  dyn.params.dt = 1e-2;
  QGState s{random_state(g, 5), 0.0};
  std::vector<Sample> window;
  for (int i = 0; i <= n; ++i) {
    window.push_back({s.omega_hat, SpectralField(g), s.t});
    s = step_rk4(s, dyn);
  }
  const CnnParams p = cnn_init(desk_arch(), 2);
  const Normalization norm{1.0, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(aposteriori_loss(p, norm, window, dyn, true));
}
BENCHMARK(BM_AposterioriGradient)->Arg(1)->Arg(5)->Arg(30)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  diffqg::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
