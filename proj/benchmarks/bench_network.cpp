#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "emgauth/dataset.hpp"
#include "emgauth/network.hpp"
#include "emgauth/synth.hpp"
#include "emgauth/training.hpp"

namespace {

using namespace emgauth;

ModelConfig config_for(int width) {
  ModelConfig cfg;
  cfg.input_width = width;
  return cfg;
}

void BM_TowerForward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const auto batch = static_cast<std::size_t>(state.range(1));
  const SiameseModel<float> model = init_model(config_for(width), 1);
  const LabeledDataset ds = generate_dataset(4, std::max(2, static_cast<int>(batch)), width, {}, 2);
  std::vector<const ChannelMatrix*> ptrs;
  for (const auto& g : ds.groups()) {
    for (const auto& w : g.windows) {
      if (ptrs.size() < batch) ptrs.push_back(&w.data());
    }
  }
  TowerBatch<float> ws;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ws.forward(model, ptrs, nullptr).data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ptrs.size()));
}
BENCHMARK(BM_TowerForward)->Args({64, 32})->Args({400, 1})->Args({400, 32})->Unit(benchmark::kMicrosecond);

void BM_PairsBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const SiameseModel<float> model = init_model(config_for(width), 1);
  const LabeledDataset ds = generate_dataset(4, 8, width, {}, 3);
  Rng rng(4);
  auto pairs = construct_pairs(ds, rng);
  pairs.erase(pairs.begin() + 32, pairs.end());
  TowerBatch<float> ws;
  ParamVector<float> grads(model.parameters().size());
  Rng dropout(5);
  for (auto _ : state) {
    std::fill(grads.begin(), grads.end(), 0.0f);
    benchmark::DoNotOptimize(pairs_backward<float>(model, pairs, &dropout, ws, grads, 1.0f / 32));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_PairsBackward)->Arg(64)->Arg(400)->Unit(benchmark::kMillisecond);

}  // namespace
