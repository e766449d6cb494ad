#include <benchmark/benchmark.h>

#include "ekd/axioms.hpp"
#include "ekd/distill.hpp"
#include "ekd/guarantees.hpp"
#include "ekd/montecarlo.hpp"
#include "ekd/operators.hpp"

using namespace ekd;

namespace {

Exec mode(const benchmark::State& state) { return state.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_Axiom3Geometric(benchmark::State& state) {
  const auto s = make_subject(AggregationOperator::entropic_geometric(0.0));
  for (auto _ : state) benchmark::DoNotOptimize(check_axiom3(s, 2000, 1, {}, mode(state)));
}

void BM_TheoremSweep(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(sweep_theorems(1, 2000, {}, mode(state)));
}

void BM_NoiseSampling(benchmark::State& state) {
  const NoiseModel m{Distribution::uniform(16), 0.01, 0.5, 5, 1e-3};
  for (auto _ : state) benchmark::DoNotOptimize(sample_teacher_noise(m, 1, 20000, mode(state)));
}

void BM_Gradient(benchmark::State& state) {
  const auto ens = TeacherEnsemble::uniform(3, 32);
  const auto targets = make_targets(make_random_task(ens, 256, 1.0, false, 1), AggregationOperator::linear());
  const auto student = StudentModel::low_rank(256, 32, 4, 1.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradient(student, targets, Objective::SumOfKls, mode(state)));
}

}  // namespace

BENCHMARK(BM_Axiom3Geometric)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TheoremSweep)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NoiseSampling)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gradient)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
