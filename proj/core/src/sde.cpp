#include "sincon/sde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "sincon/csv.hpp"
#include "sincon/parallel.hpp"
#include "sincon/rng.hpp"

namespace sincon {

namespace {
bool nonzero(const Vec& v) { return (v.array() != 0.0).any(); }
}

SingularControlPath SingularControlPath::single_jump(int m_, int node, const Vec& size) {
    SingularControlPath path;
    path.m = m_;
    path.jumps.emplace_back(node, size);
    return path;
}

Vec SingularControlPath::increment(int step, double dt) const {
    Vec inc = Vec::Zero(m);
    if (!ac_density.empty() && step < static_cast<int>(ac_density.size()))
        inc += ac_density[step] * dt;
    inc += jump_at(step);
    return inc;
}

Vec SingularControlPath::jump_at(int node) const {
    Vec j = Vec::Zero(m);
    for (const auto& [idx, size] : jumps) {
        if (idx == node) j += size;
    }
    return j;
}

void SingularControlPath::validate(int steps) const {
    if (!ac_density.empty() && static_cast<int>(ac_density.size()) != steps)
        throw ContractError("SingularControlPath: ac_density length != step count");
    for (const auto& rate : ac_density) {
        if (rate.size() != m) throw ContractError("SingularControlPath: rate dimension != m");
        if ((rate.array() < 0).any())
            throw ContractError("SingularControlPath: negative rate breaks monotonicity");
    }
    int prev = -1;
    for (const auto& [idx, size] : jumps) {
        if (idx < 0 || idx >= steps)
            throw ContractError("SingularControlPath: jump node out of range");
        if (idx < prev) throw ContractError("SingularControlPath: jumps must be sorted");
        prev = idx;
        if (size.size() != m) throw ContractError("SingularControlPath: jump dimension != m");
        if ((size.array() < 0).any())
            throw ContractError("SingularControlPath: negative jump breaks monotonicity");
    }
}

RegularControlPolicy RegularControlPolicy::constant(const Vec& v) {
    return {Feedback{[v](double, const Vec&) { return v; }}};
}

Vec RegularControlPolicy::value(double t, const Vec& x, int step) const {
    if (std::holds_alternative<Feedback>(rule)) return std::get<Feedback>(rule)(t, x);
    const auto& seq = std::get<std::vector<Vec>>(rule);
    if (step < 0 || step >= static_cast<int>(seq.size()))
        throw ContractError("RegularControlPolicy: open-loop step out of range");
    return seq[step];
}

Vec PathBundle::control_at(int path, int step) const {
    if (std::holds_alternative<RegularControlPolicy::Feedback>(policy.rule))
        return std::get<RegularControlPolicy::Feedback>(policy.rule)(
            grid.node(step), state_vec(path, step));
    return controls[step];
}

Vec PathBundle::xi_increment(int path, int step) const {
    if (!xi_per_path.empty()) return xi_per_path[static_cast<long>(path) * grid.N + step];
    return xi.increment(step, grid.dt());
}

namespace {

PathBundle simulate_impl(const ProblemSpec& spec, const TimeGrid& grid, const Vec& x0,
                         const RegularControlPolicy& policy, const SingularControlPath* xi,
                         const SingularRule* rule, int M, std::uint64_t seed) {
    spec.validate_structure();
    grid.validate();
    if (M < 1) throw ContractError("simulate_forward: M must be >= 1");
    if (x0.size() != spec.n) throw ContractError("simulate_forward: x0 length != n");
    if (xi) {
        if (xi->m != spec.m) throw ContractError("simulate_forward: xi dimension != m");
        xi->validate(grid.N);
    }

    const int N = grid.N;
    const double dt = grid.dt();
    const double sqdt = std::sqrt(dt);

    PathBundle bundle;
    bundle.M = M;
    bundle.n = spec.n;
    bundle.d = spec.d;
    bundle.grid = grid;
    bundle.seed = seed;
    bundle.X.assign(static_cast<long>(M) * (N + 1) * spec.n, 0.0);
    bundle.dW.assign(static_cast<long>(M) * N * spec.d, 0.0);
    bundle.policy = policy;
    if (xi) bundle.xi = *xi;
    if (rule) bundle.xi_per_path.assign(static_cast<long>(M) * N, Vec::Zero(spec.m));
    bundle.controls.resize(N);
    for (int i = 0; i < N; ++i) bundle.controls[i] = policy.value(grid.node(i), x0, i);

    const bool feedback = std::holds_alternative<RegularControlPolicy::Feedback>(policy.rule);

    std::string failure;
    bool is_contract_failure = false;
    std::mutex failure_mutex;
    auto fail = [&](const std::string& msg, bool contract) {
        std::lock_guard<std::mutex> g(failure_mutex);
        if (failure.empty()) {
            failure = msg;
            is_contract_failure = contract;
        }
    };

    parallel_for(0, M, [&](long lo, long hi) {
        try {
            Vec x(spec.n), v(spec.k), dw(spec.d);
            for (long p = lo; p < hi; ++p) {
                x = x0;
                for (int a = 0; a < spec.n; ++a) bundle.X[(p * (N + 1)) * spec.n + a] = x[a];
                for (int i = 0; i < N; ++i) {
                    const double t = grid.node(i);
                    v = feedback ? policy.value(t, x, i) : bundle.controls[i];
                    if (spec.k > 0 && !spec.U.contains(v)) {
                        fail("simulate_forward: policy value outside U at t=" + std::to_string(t),
                             true);
                        return;
                    }
                    for (int a = 0; a < spec.d; ++a) {
                        dw[a] = sqdt * rng::normal(seed, p, i, a);
                        bundle.dW[(p * N + i) * spec.d + a] = dw[a];
                    }
                    Vec dxi;
                    if (rule) {
                        Vec jump = (*rule)(t, x);
                        if (jump.size() != spec.m || (jump.array() < 0).any()) {
                            fail("simulate_forward: singular rule emitted invalid jump", true);
                            return;
                        }
                        bundle.xi_per_path[p * N + i] = jump;
                        dxi = std::move(jump);
                    } else {
                        dxi = xi->increment(i, dt);
                    }
                    x += spec.b(t, x, v) * dt + spec.sigma(t, x, v) * dw + spec.G * dxi;
                    if (!x.allFinite()) {
                        fail("simulate_forward: non-finite state at path " + std::to_string(p) +
                                 " step " + std::to_string(i),
                             false);
                        return;
                    }
                    for (int a = 0; a < spec.n; ++a)
                        bundle.X[(p * (N + 1) + i + 1) * spec.n + a] = x[a];
                }
            }
        } catch (const std::exception& e) {
            fail(std::string("simulate_forward: ") + e.what(), true);
        }
    });
    if (!failure.empty()) {
        if (is_contract_failure) throw ContractError(failure);
        throw NumericError(failure);
    }
    return bundle;
}

}  // namespace

PathBundle simulate_forward(const ProblemSpec& spec, const TimeGrid& grid, const Vec& x0,
                            const RegularControlPolicy& policy, const SingularControlPath& xi,
                            int M, std::uint64_t seed) {
    return simulate_impl(spec, grid, x0, policy, &xi, nullptr, M, seed);
}

PathBundle simulate_forward_rule(const ProblemSpec& spec, const TimeGrid& grid, const Vec& x0,
                                 const RegularControlPolicy& policy, const SingularRule& rule,
                                 int M, std::uint64_t seed) {
    return simulate_impl(spec, grid, x0, policy, nullptr, &rule, M, seed);
}

ResidualStats ito_residual(const ProblemSpec& spec, const PathBundle& bundle,
                           const TestFunction& psi) {
    const int N = bundle.grid.N;
    const double dt = bundle.grid.dt();
    const bool feedback_xi = !bundle.xi_per_path.empty();

    std::vector<double> residual(bundle.M, 0.0);
    std::string failure;
    std::mutex failure_mutex;

    parallel_for(0, bundle.M, [&](long lo, long hi) {
        try {
            for (long p = lo; p < hi; ++p) {
                const int pi = static_cast<int>(p);
                double acc = 0.0;
                Vec x = bundle.state_vec(pi, 0);
                const double psi0 = psi.value(bundle.grid.t0, x);
                for (int i = 0; i < N; ++i) {
                    const double t = bundle.grid.node(i);
                    x = bundle.state_vec(pi, i);
                    const Vec v = bundle.control_at(pi, i);
                    const Vec grad = psi.grad(t, x);
                    const Mat hess = psi.hess(t, x);
                    const Mat sig = spec.sigma(t, x, v);
                    const Vec drift = spec.b(t, x, v);
                    // dt-term: psi_t + (1/2) Tr(sigma sigma^T D^2 psi) + <Dpsi, b>
                    const double lpsi = psi.dt(t, x) +
                                        0.5 * (sig * sig.transpose() * hess).trace() +
                                        grad.dot(drift);
                    acc += lpsi * dt;
                    Vec dw(bundle.d);
                    for (int a = 0; a < bundle.d; ++a) dw[a] = bundle.brownian(pi, i, a);
                    acc += grad.dot(sig * dw);
                    // Singular integral Dpsi^T G dxi plus the jump correction.
                    const Vec dxi = bundle.xi_increment(pi, i);
                    if (nonzero(dxi)) {
                        acc += grad.dot(spec.G * dxi);
                        const Vec jump = feedback_xi ? dxi : bundle.xi.jump_at(i);
                        if (nonzero(jump)) {
                            const Vec push = spec.G * jump;
                            acc += psi.value(t, x + push) - psi.value(t, x) - grad.dot(push);
                        }
                    }
                    if (!std::isfinite(acc))
                        throw NumericError("ito_residual: non-finite term at step " +
                                           std::to_string(i));
                }
                const Vec xT = bundle.state_vec(pi, N);
                residual[p] = psi.value(bundle.grid.T, xT) - psi0 - acc;
            }
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> g(failure_mutex);
            if (failure.empty()) failure = e.what();
        }
    });
    if (!failure.empty()) throw NumericError(failure);

    double mean = 0.0;
    for (double r : residual) mean += r;
    mean /= bundle.M;
    double var = 0.0;
    for (double r : residual) var += (r - mean) * (r - mean);
    var = bundle.M > 1 ? var / (bundle.M - 1) : 0.0;
    return ResidualStats{mean, std::sqrt(var / bundle.M), bundle.M};
}

MomentScalingReport moment_scaling(const ProblemSpec& spec, const TimeGrid& grid,
                                   const std::vector<Vec>& x0_list,
                                   const RegularControlPolicy& policy,
                                   const SingularControlPath& xi, int M, std::uint64_t seed) {
    if (x0_list.size() < 3)
        throw ContractError("moment_scaling: need >= 3 initial states");

    MomentScalingReport report;
    std::vector<PathBundle> bundles;
    bundles.reserve(x0_list.size());
    for (const auto& x0 : x0_list)
        bundles.push_back(simulate_forward(spec, grid, x0, policy, xi, M, seed));

    for (size_t s = 0; s < x0_list.size(); ++s) {
        double mean_sup = 0.0;
        for (int p = 0; p < M; ++p) {
            double sup = 0.0;
            for (int i = 0; i <= grid.N; ++i) {
                double norm_sq = 0.0;
                for (int a = 0; a < spec.n; ++a) {
                    const double xv = bundles[s].state(p, i, a);
                    norm_sq += xv * xv;
                }
                sup = std::max(sup, norm_sq);
            }
            mean_sup += sup;
        }
        mean_sup /= M;
        const double x0n = x0_list[s].norm();
        report.x0_norm.push_back(x0n);
        report.sup_sq.push_back(mean_sup);
        report.growth_ratio.push_back(mean_sup / (1.0 + x0n * x0n));
    }
    report.c_hat = *std::max_element(report.growth_ratio.begin(), report.growth_ratio.end());

    // Pairwise flow stability under common random numbers (same seed).
    for (size_t s = 0; s + 1 < x0_list.size(); ++s) {
        const double dx = (x0_list[s] - x0_list[s + 1]).squaredNorm();
        if (dx == 0.0) continue;
        double mean_sup = 0.0;
        for (int p = 0; p < M; ++p) {
            double sup = 0.0;
            for (int i = 0; i <= grid.N; ++i) {
                double diff_sq = 0.0;
                for (int a = 0; a < spec.n; ++a) {
                    const double delta =
                        bundles[s].state(p, i, a) - bundles[s + 1].state(p, i, a);
                    diff_sq += delta * delta;
                }
                sup = std::max(sup, diff_sq);
            }
            mean_sup += sup;
        }
        report.pairwise_ratio.push_back(mean_sup / M / dx);
    }
    if (!report.pairwise_ratio.empty())
        report.c_hat_pairwise =
            *std::max_element(report.pairwise_ratio.begin(), report.pairwise_ratio.end());
    return report;
}

void dump_paths_csv(const PathBundle& bundle, const std::string& filename, int max_paths) {
    std::ofstream out(filename);
    if (!out) throw ConfigError("dump_paths_csv: cannot open " + filename);
    out << "path,step,t";
    for (int a = 1; a <= bundle.n; ++a) out << ",x_" << a;
    out << "\n";
    const int limit = std::min(bundle.M, max_paths);
    for (int p = 0; p < limit; ++p) {
        for (int i = 0; i <= bundle.grid.N; ++i) {
            out << p << ',' << i << ',' << csv::format(bundle.grid.node(i));
            for (int a = 0; a < bundle.n; ++a) out << ',' << csv::format(bundle.state(p, i, a));
            out << "\n";
        }
    }
}

}  // namespace sincon
