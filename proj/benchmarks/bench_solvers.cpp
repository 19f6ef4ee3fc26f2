#include <benchmark/benchmark.h>

#include <string>

#include "nmr/mc.hpp"
#include "nmr/model_io.hpp"
#include "nmr/thiele.hpp"

using namespace nmr;

namespace {

const ModelSpec& model(const char* name) {
  static const ModelSpec markov = load_model(std::string(NMR_SCENARIO_DIR) + "/disability_markov.json");
  static const ModelSpec duration = load_model(std::string(NMR_SCENARIO_DIR) + "/disability_duration.json");
  return std::string(name) == "markov" ? markov : duration;
}

TimeGrid grid(const benchmark::State& st) { return TimeGrid::uniform(40.0, 1.0 / static_cast<double>(st.range(0))); }

void BM_Occupation(benchmark::State& st) {
  const auto& spec = model("markov");
  const auto g = grid(st);
  for (auto _ : st) benchmark::DoNotOptimize(solve_occupation(spec, g));
}
BENCHMARK(BM_Occupation)->Arg(50)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_JointLaw(benchmark::State& st) {
  const auto& spec = model("duration");
  const auto g = grid(st);
  for (auto _ : st) benchmark::DoNotOptimize(joint_law(spec, g));
}
BENCHMARK(BM_JointLaw)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_G1G2(benchmark::State& st) {
  const auto& spec = model("duration");
  const auto g = grid(st);
  const auto law = joint_law(spec, g);
  for (auto _ : st) {
    const auto g1 = solve_G1(spec, law, g);
    benchmark::DoNotOptimize(solve_G2(spec, law, g1, g));
  }
}
BENCHMARK(BM_G1G2)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_FullInfo(benchmark::State& st) {
  const auto& spec = model("duration");
  const auto g = grid(st);
  const auto law = joint_law(spec, g);
  for (auto _ : st) benchmark::DoNotOptimize(solve_full_info(spec, law, g));
}
BENCHMARK(BM_FullInfo)->Arg(25)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_SimulatePaths(benchmark::State& st) {
  const auto& spec = model("duration");
  for (auto _ : st) benchmark::DoNotOptimize(simulate_paths(spec, static_cast<std::size_t>(st.range(0)), 7));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_SimulatePaths)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_EstimateReserve(benchmark::State& st) {
  const auto& spec = model("duration");
  const auto paths = simulate_paths(spec, 100000, 7);
  const OutflowEvaluator y(spec, 0.02);
  const auto c = ConditioningSpec::lumped(20.0, spec.space().lumped_retired());
  for (auto _ : st) benchmark::DoNotOptimize(estimate_reserve(paths, c, y, spec.space(), 1));
}
BENCHMARK(BM_EstimateReserve)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
