#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vasamp/decoder.hpp"
#include "vasamp/oracle.hpp"
#include "vasamp/suite.hpp"
#include "vasamp/td.hpp"
#include "vasamp/value.hpp"

using namespace vas;

namespace {

std::vector<double> random_dist(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> d(n);
  double z = 0.0;
  for (auto& p : d) z += p = u(eng);
  for (auto& p : d) p /= z;
  return d;
}

void augment_full_bench(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto base = random_dist(n, 1);
  const auto values = random_dist(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(augment_full(base, values, 3.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(augment_full_bench)->RangeMultiplier(8)->Range(8, 32768);

void augment_topk_bench(benchmark::State& state) {
  const std::size_t n = 32768;
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto base = random_dist(n, 1);
  const auto values = random_dist(n, 2);
  const TokenValueFn fn = [&](TokenId x) { return values[x]; };
  for (auto _ : state) benchmark::DoNotOptimize(augment_topk(base, fn, 3.0, k, Fallback::mean_value));
}
BENCHMARK(augment_topk_bench)->Arg(1)->Arg(10)->Arg(20)->Arg(100);

void exact_value_bench(benchmark::State& state) {
  const auto inst = state.range(0) == 0 ? bigram_instance() : skew_instance();
  const auto r = inst.reward();
  for (auto _ : state) benchmark::DoNotOptimize(exact_value(*inst.base, *r, inst.config));
  state.SetLabel(inst.name);
}
BENCHMARK(exact_value_bench)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void exact_vas_policy_bench(benchmark::State& state) {
  const auto inst = skew_instance();
  const auto r = inst.reward();
  for (auto _ : state) benchmark::DoNotOptimize(exact_vas_policy(*inst.base, *r, 3.0, inst.config));
}
BENCHMARK(exact_vas_policy_bench)->Unit(benchmark::kMillisecond);

void td_fit_bench(benchmark::State& state) {
  const auto inst = skew_instance();
  const auto r = inst.reward();
  const std::vector<TokenSeq> prompts{inst.prompt};
  const auto data = collect_dataset(*inst.base, *r, prompts, static_cast<std::size_t>(state.range(0)), inst.config);
  TdConfig td;
  td.epochs = 1;
  for (auto _ : state) {
    TabularValue v;
    benchmark::DoNotOptimize(fit_value(v, data, td));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(td_fit_bench)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void decode_sequence_bench(benchmark::State& state) {
  const auto inst = bigram_instance();
  const auto r = inst.reward();
  const StateValueScorer scorer(std::make_shared<ValueTable>(exact_value(*inst.base, *r, inst.config)));
  DecodeParams p;
  p.beta = 3.0;
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(decode_sequence(*inst.base, scorer, *r, {}, inst.config, p, rng));
}
BENCHMARK(decode_sequence_bench);

}  // namespace

BENCHMARK_MAIN();
