#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>
#include <string>

#include <unistd.h>

#include "emgauth/auth.hpp"
#include "emgauth/synth.hpp"
#include "emgauth/training.hpp"

namespace {

using namespace emgauth;

void BM_Verify(benchmark::State& state) {
  const bool cached = state.range(0) != 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("emgauth_bench_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  {
    TemplateStore store(dir);
    const LabeledDataset ds = generate_dataset(2, 5, kSittingWidth, {}, 7);
    const auto& windows = ds.groups().front().windows;
    const std::string user = ds.groups().front().subject;
    const Motion motions[] = {Motion::kP1, Motion::kP2, Motion::kP3, Motion::kP4};
    for (int m = 0; m < 4; ++m) store.enroll(user, motions[m], windows[m]);
    auto model = std::make_shared<const SiameseModel<float>>(init_model(ModelConfig{}, 1));
    const Verifier verifier(model);
    const EmgWindow& query = windows[4];
    for (auto _ : state) {
      if (cached) {
        benchmark::DoNotOptimize(verifier.verify(store, user, query, 0.5));
      } else {
        benchmark::DoNotOptimize(verify(store, *model, user, query, 0.5));
      }
    }
  }
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_Verify)->ArgName("cached")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

}  // namespace
