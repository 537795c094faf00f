#include <vector>

#include <benchmark/benchmark.h>

#include "gmmddpm/sampler.hpp"
#include "gmmddpm/schedule.hpp"
#include "gmmddpm/score_oracle.hpp"

namespace {

void BM_DdpmSample(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const gmmddpm::GaussianMixture gmm({0.5, 0.5}, {{2.0, 0.0}, {-2.0, 0.0}});
  const auto sched = gmmddpm::build_schedule(T);
  const auto oracle = gmmddpm::exact_oracle(gmm, sched);
  for (auto _ : state) {
    auto traj = gmmddpm::ddpm_sample(*oracle, sched, 2, n, 1);
    benchmark::DoNotOptimize(traj.output.points.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(T * n));
}
BENCHMARK(BM_DdpmSample)->Args({64, 1000})->Args({512, 1000})->Unit(benchmark::kMillisecond);

void BM_BuildSchedule(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(gmmddpm::build_schedule(static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BuildSchedule)->Arg(1024);

}  // namespace
