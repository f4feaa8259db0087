#include <benchmark/benchmark.h>

#include "sincon/problem.hpp"
#include "sincon/sde.hpp"

using namespace sincon;

static void BM_SimulateForward(benchmark::State& state) {
    const ProblemSpec spec = builtin_section4();
    const TimeGrid grid(0.0, 1.0, 100);
    const auto policy = RegularControlPolicy::constant(Vec::Constant(1, -1.0));
    const SingularControlPath xi = SingularControlPath::zero(1);
    const int paths = static_cast<int>(state.range(0));
    for (auto _ : state) {
        PathBundle bundle = simulate_forward(spec, grid, Vec::Constant(1, 1.0), policy, xi,
                                             paths, 1);
        benchmark::DoNotOptimize(bundle.X.data());
    }
    state.SetItemsProcessed(state.iterations() * paths * grid.N);
}
BENCHMARK(BM_SimulateForward)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
