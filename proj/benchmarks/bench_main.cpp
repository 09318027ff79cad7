#include <benchmark/benchmark.h>

#include "scoretune/net.hpp"
#include "scoretune/oracle.hpp"
#include "scoretune/random.hpp"
#include "scoretune/sampler.hpp"
#include "scoretune/schedule.hpp"

using namespace scoretune;

namespace {

Matrix normal_matrix(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  fill_standard_normal(rng, m);
  return m;
}

// Mixture score for a batch of 32 chains; args are (components, D).
void BM_MixtureScore(benchmark::State& state) {
  const auto N = state.range(0), D = state.range(1);
  const GaussianMixtureOracle oracle(normal_matrix(N, D, 1), 0.0);
  const Matrix x = normal_matrix(32, D, 2);
  for (auto _ : state) benchmark::DoNotOptimize(oracle.score(x, 0.5));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_MixtureScore)->Args({100, 2})->Args({1000, 64})->Args({10000, 3072})->Unit(benchmark::kMillisecond);

void BM_BuildSchedule(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(build_schedule(50.0, 0.01, 3072, 0.5));
}
BENCHMARK(BM_BuildSchedule);

void BM_SolveEpsilon(benchmark::State& state) {
  const auto s = build_schedule(50.0, 0.01, 3072, 0.5);
  const auto grid = default_epsilon_grid(s.sigmaL());
  for (auto _ : state) benchmark::DoNotOptimize(solve_epsilon(s, 5, grid));
}
BENCHMARK(BM_SolveEpsilon);

// One DSM loss and gradient on a batch of 128; arg is the hidden width.
void BM_DsmGrad(benchmark::State& state) {
  const MlpScoreNet net(NetShape{2, state.range(0), 2, Activation::softplus}, 3);
  const auto s = NoiseSchedule::geometric(8.0, 0.05, 12, 2);
  const Matrix batch = normal_matrix(128, 2, 4);
  Rng rng(5);
  const DsmDraw draw = draw_dsm(128, 2, s, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dsm_grad(net, batch, s, draw));
}
BENCHMARK(BM_DsmGrad)->Arg(64)->Arg(128)->Arg(256);

void BM_AnnealSample(benchmark::State& state) {
  Matrix centers(2, 2);
  centers << -3, 0, 3, 0;
  const GaussianMixtureOracle oracle(centers, 0.5);
  const auto s = NoiseSchedule::geometric(8.0, 0.05, 12, 2);
  LangevinConfig cfg;
  cfg.T = 100;
  cfg.epsilon = 5e-5;
  const Matrix init = make_init(InitKind::uniform, 256, 2, 6);
  for (auto _ : state) benchmark::DoNotOptimize(anneal_sample(oracle, s, cfg, init, 7));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_AnnealSample)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
