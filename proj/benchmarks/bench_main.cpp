#include <benchmark/benchmark.h>

#include "iclcheck/cgm_adapters.hpp"
#include "iclcheck/discrepancy.hpp"
#include "iclcheck/estimators.hpp"
#include "iclcheck/reference_models.hpp"

namespace {

using namespace iclcheck;

Dataset cubic_data(std::size_t n, std::uint64_t seed) {
  Stream rng(seed);
  const Explanation f(Polynomial{{0.1, 1.0, -0.5, 0.2}}, 0.25);
  return sample_likelihood(f, n, QueryDomain{}, rng);
}

EstimatorConfig config(std::size_t m, DiscrepancyKind kind, std::size_t budget = 200) {
  EstimatorConfig c;
  c.replicates = m;
  c.discrepancy = kind;
  c.completion_budget = budget;
  c.seed = SeedSpec(1);
  return c;
}

void BM_PhiloxU64(benchmark::State& state) {
  Stream rng(42);
  for (auto _ : state) benchmark::DoNotOptimize(rng.next_u64());
}
BENCHMARK(BM_PhiloxU64);

void BM_PhiloxNormal(benchmark::State& state) {
  Stream rng(42);
  for (auto _ : state) benchmark::DoNotOptimize(rng.normal());
}
BENCHMARK(BM_PhiloxNormal);

void BM_FitPosterior(benchmark::State& state) {
  const ConjugateModel model;
  const Dataset data = cubic_data(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(fit_posterior(model, data));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_FitPosterior)->RangeMultiplier(4)->Range(16, 4096)->Complexity();

void BM_NlmlDiscrepancy(benchmark::State& state) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Dataset context = cubic_data(static_cast<std::size_t>(state.range(0)), 8);
  const Dataset x = cubic_data(100, 9);
  for (auto _ : state) benchmark::DoNotOptimize(nlml_discrepancy(x, context, cgm));
}
BENCHMARK(BM_NlmlDiscrepancy)->Arg(10)->Arg(100)->Arg(1000);

void BM_PpcExactNll(benchmark::State& state) {
  const ConjugateModel model;
  const Dataset observed = cubic_data(100, 10);
  const Dataset test = cubic_data(100, 11).prefix(100, Provenance::test);
  const auto cfg = config(static_cast<std::size_t>(state.range(0)), DiscrepancyKind::exact_nll);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_p_ppc(model, observed, test, cfg));
}
BENCHMARK(BM_PpcExactNll)->Arg(40)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_GpcTabular(benchmark::State& state) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Dataset observed = cubic_data(100, 12);
  const Dataset test = cubic_data(100, 13).prefix(100, Provenance::test);
  const auto cfg = config(40, DiscrepancyKind::generative_nll, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(estimate_p_gpc(cgm, observed, test, cfg));
}
BENCHMARK(BM_GpcTabular)->Arg(10)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_GpcLite(benchmark::State& state) {
  const ExactBayesCgm cgm{ConjugateModel{}};
  const Dataset observed = cubic_data(static_cast<std::size_t>(state.range(0)), 14);
  const Dataset test = cubic_data(static_cast<std::size_t>(state.range(0)), 15)
                           .prefix(static_cast<std::size_t>(state.range(0)), Provenance::test);
  const auto cfg = config(40, DiscrepancyKind::nlml);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_p_gpc_lite(cgm, observed, test, cfg));
}
BENCHMARK(BM_GpcLite)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
