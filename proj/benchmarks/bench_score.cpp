#include <vector>

#include <benchmark/benchmark.h>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/random.hpp"

namespace {

gmmddpm::GaussianMixture random_mixture(std::size_t K, std::size_t d) {
  gmmddpm::Rng rng(7);
  std::vector<double> means(K * d);
  for (double& m : means) m = 2.0 * rng.normal();
  return gmmddpm::GaussianMixture(std::vector<double>(K, 1.0 / static_cast<double>(K)), means, d);
}

void BM_Score(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto gmm = random_mixture(K, d);
  std::vector<double> x(d, 0.3), out(d);
  for (auto _ : state) {
    gmm.score(x, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Score)->Args({3, 2})->Args({16, 8})->Args({64, 8})->Args({3, 128});

void BM_JacobianTrace(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const auto gmm = random_mixture(K, d);
  std::vector<double> x(d, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(gmm.jacobian_trace(x));
}
BENCHMARK(BM_JacobianTrace)->Args({3, 2})->Args({64, 8});

}  // namespace
