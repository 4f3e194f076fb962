#include <benchmark/benchmark.h>

#include <vector>

#include "emgauth/evaluation.hpp"
#include "emgauth/rng.hpp"

namespace {

using namespace emgauth;

std::vector<ScoredPair> scores(std::size_t n) {
  Rng rng(1);
  std::vector<ScoredPair> s;
  for (std::size_t i = 0; i < n; ++i) {
    const bool same = i % 2 == 0;
    s.push_back({rng.uniform() + (same ? 0.0 : 0.4), same});
  }
  return s;
}

void BM_ComputeEer(benchmark::State& state) {
  const auto s = scores(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compute_eer(s));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ComputeEer)->RangeMultiplier(10)->Range(1000, 1000000)->Complexity(benchmark::oNLogN);

void BM_SweepCurves(benchmark::State& state) {
  const auto s = scores(100000);
  for (auto _ : state) benchmark::DoNotOptimize(sweep_curves(s, 1000).auc);
}
BENCHMARK(BM_SweepCurves)->Unit(benchmark::kMillisecond);

}  // namespace
