#include <benchmark/benchmark.h>

#include <cmath>

#include "sincon/hjb.hpp"
#include "sincon/problem.hpp"

using namespace sincon;

static void BM_SolveHjbSection4(benchmark::State& state) {
    const ProblemSpec spec = builtin_section4();
    const double dx = 1.0 / static_cast<double>(state.range(0));
    const int nodes = static_cast<int>(std::lround(4.0 / dx)) + 1;
    const SpaceGrid sgrid(-2.0, 2.0, nodes);
    const TimeGrid tgrid(0.0, 1.0, 25);
    const ControlGrid controls = discretize_control_set(spec.U);
    for (auto _ : state) {
        ValueSurface surface = solve_hjb_vi(spec, tgrid, sgrid, controls);
        benchmark::DoNotOptimize(surface.u.data());
    }
    state.SetLabel("nodes=" + std::to_string(nodes));
}
BENCHMARK(BM_SolveHjbSection4)->Arg(25)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_ConstraintSweep(benchmark::State& state) {
    const ProblemSpec spec = builtin_section4();
    const SpaceGrid sgrid(-2.0, 2.0, static_cast<int>(state.range(0)));
    std::vector<double> slice(sgrid.total_nodes());
    for (long j = 0; j < sgrid.total_nodes(); ++j) slice[j] = std::sin(0.37 * j);
    for (auto _ : state) {
        std::vector<double> work = slice;
        enforce_gradient_constraint(work, spec, sgrid);
        benchmark::DoNotOptimize(work.data());
    }
}
BENCHMARK(BM_ConstraintSweep)->Arg(401)->Arg(1601);

BENCHMARK_MAIN();
