#include <benchmark/benchmark.h>

#include "sincon/bsde.hpp"
#include "sincon/problem.hpp"

using namespace sincon;

static void BM_SolveBsde(benchmark::State& state) {
    const ProblemSpec spec = builtin_section4();
    const TimeGrid grid(0.0, 1.0, 50);
    const int paths = static_cast<int>(state.range(0));
    const PathBundle bundle =
        simulate_forward(spec, grid, Vec::Constant(1, 1.0),
                         RegularControlPolicy::constant(Vec::Constant(1, -1.0)),
                         SingularControlPath::zero(1), paths, 1);
    std::vector<double> terminal(paths);
    for (int p = 0; p < paths; ++p) terminal[p] = spec.phi(bundle.state_vec(p, grid.N));
    const RegressionBasis basis = RegressionBasis::polynomial(3);
    for (auto _ : state) {
        BackwardSolution sol = solve_bsde(spec, bundle, terminal, basis);
        benchmark::DoNotOptimize(sol.y0);
    }
    state.SetItemsProcessed(state.iterations() * paths * grid.N);
}
BENCHMARK(BM_SolveBsde)->Arg(4000)->Arg(20000)->Unit(benchmark::kMillisecond);
