#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "sincon/grid.hpp"
#include "sincon/problem.hpp"

namespace sincon {

// Deterministic singular control on a time grid: nonnegative absolutely
// continuous rates per step plus nonnegative jumps at nodes. Cumulative xi is
// componentwise nondecreasing with xi_{t0} = 0. Convention used everywhere
// (simulator, BSDE, checks): the stored state X[i] is the left limit at node
// i; the increment dxi_i = rate_i * dt + jump_i enters interval i's update, so
// a jump at node i lands between X[i] and X[i+1].
struct SingularControlPath {
    int m = 1;
    std::vector<Vec> ac_density;               // per-step rates, length N (or empty = 0)
    std::vector<std::pair<int, Vec>> jumps;    // (node index, jump vector), sorted

    static SingularControlPath zero(int m_) { return SingularControlPath{m_, {}, {}}; }
    static SingularControlPath single_jump(int m_, int node, const Vec& size);

    // Total increment applied over interval [t_i, t_{i+1}).
    Vec increment(int step, double dt) const;
    Vec jump_at(int node) const;
    void validate(int steps) const;
};

// Regular control: either a feedback map (t, x) -> U or a shared open-loop
// sequence of per-step values.
struct RegularControlPolicy {
    using Feedback = std::function<Vec(double t, const Vec& x)>;
    std::variant<Feedback, std::vector<Vec>> rule;

    static RegularControlPolicy feedback(Feedback fn) { return {std::move(fn)}; }
    static RegularControlPolicy constant(const Vec& v);
    static RegularControlPolicy open_loop(std::vector<Vec> per_step) { return {std::move(per_step)}; }

    Vec value(double t, const Vec& x, int step) const;
};

// Monte Carlo ensemble of forward paths. Layout: X[p * (N+1) + i] is the
// n-vector state of path p at node i; dW[p * N + i] the Brownian increment.
struct PathBundle {
    int M = 0;
    int n = 1;
    int d = 1;
    TimeGrid grid;
    std::uint64_t seed = 0;

    std::vector<double> X;   // M * (N+1) * n
    std::vector<double> dW;  // M * N * d
    RegularControlPolicy policy;  // the applied regular control
    std::vector<Vec> controls;    // per-step values at the shared x0 (reporting)
    SingularControlPath xi;       // shared across paths
    // Per-path singular increments when a feedback rule generated xi
    // (overrides `xi` if nonempty): M * N entries of m-vectors.
    std::vector<Vec> xi_per_path;

    double state(int path, int node, int axis) const {
        return X[(static_cast<long>(path) * (grid.N + 1) + node) * n + axis];
    }
    Vec state_vec(int path, int node) const {
        Vec x(n);
        for (int a = 0; a < n; ++a) x[a] = state(path, node, a);
        return x;
    }
    double brownian(int path, int step, int axis) const {
        return dW[(static_cast<long>(path) * grid.N + step) * d + axis];
    }
    // The control applied to `path` over interval `step` (feedback policies
    // are re-evaluated at the stored state).
    Vec control_at(int path, int step) const;
    // Singular increment applied on interval `step` for `path`.
    Vec xi_increment(int path, int step) const;
};

// Euler-Maruyama with singular pushes:
//   X_{i+1} = X_i + b(t_i, X_i, v_i) dt + sigma(t_i, X_i, v_i) dW_i + G dxi_i.
// Bit-exact reproducible for fixed (seed, M); path j is identical for any
// M > j (counter-based substreams).
PathBundle simulate_forward(const ProblemSpec& spec, const TimeGrid& grid, const Vec& x0,
                            const RegularControlPolicy& policy, const SingularControlPath& xi,
                            int M, std::uint64_t seed);

// Variant with a state-feedback singular rule: at each node the rule may emit
// a nonnegative jump (t, x) -> m-vector; increments are recorded per path.
using SingularRule = std::function<Vec(double t, const Vec& x)>;
PathBundle simulate_forward_rule(const ProblemSpec& spec, const TimeGrid& grid, const Vec& x0,
                                 const RegularControlPolicy& policy, const SingularRule& rule,
                                 int M, std::uint64_t seed);

// Smooth test map with supplied derivatives for the pathwise change-of-
// variables residual.
struct TestFunction {
    std::function<double(double t, const Vec& x)> value;
    std::function<double(double t, const Vec& x)> dt;
    std::function<Vec(double t, const Vec& x)> grad;    // length n
    std::function<Mat(double t, const Vec& x)> hess;    // n x n
};

struct ResidualStats {
    double mean = 0.0;
    double std_error = 0.0;
    int paths = 0;
    double ci_halfwidth() const { return 3.0 * std_error; }
};

// Pathwise residual of the change-of-variables identity for psi along the
// simulated chain: psi(s, X_s) minus initial value, drift/generator integral,
// stochastic integral, singular-push integral, and jump corrections. The mean
// estimates the expectation-identity defect and shrinks at O(dt) + O(M^-1/2).
ResidualStats ito_residual(const ProblemSpec& spec, const PathBundle& bundle,
                           const TestFunction& psi);

struct MomentScalingReport {
    std::vector<double> x0_norm;          // |x0| per initial state
    std::vector<double> sup_sq;           // E[sup_s |X_s|^2]
    std::vector<double> growth_ratio;     // sup_sq / (1 + |x0|^2)
    double c_hat = 0.0;                   // max growth ratio
    std::vector<double> pairwise_ratio;   // E[sup |X^x - X^x'|^2] / |x - x'|^2
    double c_hat_pairwise = 0.0;
};

// Empirical second-moment growth and flow-stability constants under common
// random numbers; requires >= 3 initial states.
MomentScalingReport moment_scaling(const ProblemSpec& spec, const TimeGrid& grid,
                                   const std::vector<Vec>& x0_list,
                                   const RegularControlPolicy& policy,
                                   const SingularControlPath& xi, int M, std::uint64_t seed);

// Debug dump, header: path,step,t,x_1[,x_2]
void dump_paths_csv(const PathBundle& bundle, const std::string& filename, int max_paths = 100);

}  // namespace sincon
