#include <benchmark/benchmark.h>

#include <cmath>

#include "geodesy/estimators.hpp"
#include "geodesy/paths.hpp"
#include "geodesy/simbench.hpp"

namespace {

using namespace geodesy;

PathSpec spec_of(Family f) {
  PathSpec p;
  p.family = f;
  p.a_star = 5.0;
  p.support = Support(-1.0, 5.0);
  if (f == Family::ReflectedTilt) {
    p.a_star = 3.0;
    p.split_point = 2.5;
  }
  return p;
}

void BM_GaussLegendreRule(benchmark::State& state) {
  const int nodes = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(Quadrature::gauss_legendre(-1.0, 5.0, nodes));
  }
}
BENCHMARK(BM_GaussLegendreRule)->Arg(64)->Arg(201)->Arg(801);

void BM_Integrate(benchmark::State& state) {
  const Quadrature rule = Quadrature::gauss_legendre(-1.0, 5.0, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(rule.integrate([](double a) { return std::exp(-a * a) * std::cos(a); }));
  }
}
BENCHMARK(BM_Integrate)->Arg(64)->Arg(201)->Arg(801);

void BM_PathDensityMass(benchmark::State& state) {
  const auto f = static_cast<Family>(state.range(0));
  const auto dgp = make_sim7();
  const std::vector<double> x{0.6, 0.9};
  const PathSpec spec = spec_of(f);
  const Curve pi = dgp->density()->slice(x);
  for (auto _ : state) {
    const Curve rho = path_density(spec, 0.7, pi);
    benchmark::DoNotOptimize(path_rule(spec, 0.7).integrate(rho));
  }
  state.SetLabel(family_name(f));
}
BENCHMARK(BM_PathDensityMass)->DenseRange(0, 3);

void BM_OneStepOracle(benchmark::State& state) {
  const auto f = static_cast<Family>(state.range(0));
  const auto dgp = make_sim7();
  const std::size_t n = static_cast<std::size_t>(state.range(1));
  const Dataset d = dgp->sample(n, 1);
  const CrossFit cf = single_pair(n, oracle_nuisances(dgp->outcome(), dgp->density()));
  const TGrid grid = make_tgrid(0.9, 0.3);
  EstimateOptions o;
  o.compute_chi_sq = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(one_step(d, spec_of(f), grid, cf, o));
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * grid.size()));
  state.SetLabel(family_name(f));
}
BENCHMARK(BM_OneStepOracle)->ArgsProduct({{0, 1, 2}, {1000}})->Unit(benchmark::kMillisecond);

void BM_OneStepFitted(benchmark::State& state) {
  const auto dgp = make_sim7();
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Dataset d = dgp->sample(n, 2);
  const TGrid grid = make_tgrid(0.9, 0.3);
  for (auto _ : state) {
    const CrossFit cf = crossfit(d, make_fold_plan(n, 5, 3), spline_fitters({}));
    benchmark::DoNotOptimize(one_step(d, spec_of(Family::Wasserstein), grid, cf));
  }
}
BENCHMARK(BM_OneStepFitted)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
