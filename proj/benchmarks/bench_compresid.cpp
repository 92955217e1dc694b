#include <benchmark/benchmark.h>

#include <array>

#include "compresid/regression.hpp"
#include "compresid/residuals.hpp"
#include "compresid/rng.hpp"
#include "compresid/simstudy.hpp"
#include "compresid/special.hpp"

using namespace compresid;

static void BM_RegIncBeta(benchmark::State& state) {
  const double a = static_cast<double>(state.range(0));
  double x = 0.01;
  for (auto _ : state) {
    benchmark::DoNotOptimize(reg_inc_beta(x, a, 0.7 * a));
    x = x < 0.98 ? x + 0.013 : 0.01;
  }
}
BENCHMARK(BM_RegIncBeta)->Arg(1)->Arg(10)->Arg(100);

static void BM_NormalQuantile(benchmark::State& state) {
  double p = 1e-6;
  for (auto _ : state) {
    benchmark::DoNotOptimize(std_normal_quantile(p));
    p = p < 0.99 ? p + 0.00731 : 1e-6;
  }
}
BENCHMARK(BM_NormalQuantile);

static void BM_FitScenario(benchmark::State& state) {
  RngStream rng(1, 0);
  const Dataset data = generate_scenario_dataset(
      scenario_config("1a", static_cast<std::size_t>(state.range(0))), rng);
  const ModelSpec spec = scenario_model_spec();
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_mle(spec, data).loglik);
  }
}
BENCHMARK(BM_FitScenario)->Arg(20)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_ClassResiduals(benchmark::State& state) {
  RngStream rng(2, 0);
  const Dataset data = generate_scenario_dataset(scenario_config("1a", 50), rng);
  const FittedModel fit = fit_mle(scenario_model_spec(), data);
  BootstrapConfig cfg;
  cfg.B = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(class_residuals(fit, data, kClassKinds, cfg).size());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ClassResiduals)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
