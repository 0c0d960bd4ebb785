// Hot paths: bracket algebra, batched polynomial evaluation, RK4 stepping.

#include <vector>

#include <benchmark/benchmark.h>

#include "cdsim/agp.hpp"
#include "cdsim/dynamics.hpp"
#include "cdsim/ensemble.hpp"
#include "cdsim/models.hpp"
#include "cdsim/poly_eval.hpp"

namespace {

using namespace cdsim;

// {H, Q_n} along the Chebyshev chain; degree grows by two per step.
void BM_PoissonBracket(benchmark::State& state) {
  const ModelSpec& m = nonintegrable_model();
  const PhasePolynomial H = m.hamiltonian(5.0);
  const auto chain = chebyshev_chain(H, m.V, static_cast<int>(state.range(0)));
  const PhasePolynomial& q = chain.back();
  for (auto _ : state) benchmark::DoNotOptimize(poisson_bracket(H, q));
  state.counters["terms"] = static_cast<double>(q.size());
}
BENCHMARK(BM_PoissonBracket)->DenseRange(1, 9, 2);

void BM_BuildBasis(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        build_basis(nonintegrable_model(), 5.0, static_cast<int>(state.range(0))));
  }
}
BENCHMARK(BM_BuildBasis)->DenseRange(1, 7, 2);

// Gradient block of an order-l potential, evaluated point-major.
void BM_BlockEvaluate(benchmark::State& state) {
  const AgpBasis b = build_basis(nonintegrable_model(), 5.0, static_cast<int>(state.range(0)));
  std::vector<PhasePolynomial> cols;
  for (const auto& q : b.Q) {
    for (Var v : kAllVars) cols.push_back(partial(q, v));
  }
  const PolynomialBlock block(cols);
  const Ensemble e = sample_harmonic_shell(1.0, 1024, 1);
  for (auto _ : state) benchmark::DoNotOptimize(block.evaluate(e.points));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(e.size()));
}
BENCHMARK(BM_BlockEvaluate)->Arg(1)->Arg(3)->Arg(5);

// 100 unassisted RK4 steps per point.
void BM_Rk4Unassisted(benchmark::State& state) {
  const auto plan = EvolutionPlan::make(nonintegrable_model(),
                                        RampSchedule::smooth_sine(5.0, 8.85, 10.0));
  const Ensemble e = sample_harmonic_shell(1.0, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(evolve_ensemble(e, plan, 0.0, 0.1));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_Rk4Unassisted)->Arg(1024)->Arg(8192);

// Same with an order-3 gauge table on a shell-moment grid.
void BM_Rk4Assisted(benchmark::State& state) {
  TabulateOptions o;
  o.order = 3;
  o.grid_size = 11;
  o.n = 500;
  o.moments = MomentSource::shell;
  auto table = std::make_shared<const AgpTable>(tabulate(protocol_by_name("I-N"), o));
  const auto plan = EvolutionPlan::make(nonintegrable_model(),
                                        RampSchedule::smooth_sine(0.0, 1.0, 0.1), table);
  const Ensemble e = sample_harmonic_shell(1.0, 1024, 3);
  for (auto _ : state) benchmark::DoNotOptimize(evolve_ensemble(e, plan, 0.0, 0.01));
  state.SetItemsProcessed(state.iterations() * 1024 * 100);
}
BENCHMARK(BM_Rk4Assisted);

}  // namespace

BENCHMARK_MAIN();
