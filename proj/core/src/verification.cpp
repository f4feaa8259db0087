#include "sincon/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sincon {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ValueSurface dp_oracle(const ProblemSpec& spec, const DPOracleConfig& cfg) {
    spec.validate_structure();
    cfg.tgrid.validate();
    cfg.sgrid.validate();
    if (cfg.sgrid.dim() != spec.n) throw ContractError("dp_oracle: grid dimension != n");

    const auto& sgrid = cfg.sgrid;
    const long S = sgrid.total_nodes();
    const int N = cfg.tgrid.N;
    const double dt = cfg.tgrid.dt();
    const int n = sgrid.dim();

    std::vector<std::vector<double>> jump_grid(spec.m);
    for (int col = 0; col < spec.m; ++col) {
        if (!cfg.jump_sizes.empty()) {
            jump_grid[col] = cfg.jump_sizes;
        } else {
            const double gmax = spec.G.col(col).cwiseAbs().maxCoeff();
            double dx_min = sgrid.dx(0);
            for (int a = 1; a < n; ++a) dx_min = std::min(dx_min, sgrid.dx(a));
            if (gmax > 0)
                for (int l = 0; l <= 10; ++l) jump_grid[col].push_back(l * dx_min / gmax);
        }
    }
    long actions = cfg.controls.size();
    for (const auto& jg : jump_grid) actions += static_cast<long>(jg.size());
    if (static_cast<long>(N) * S * actions > cfg.max_table)
        throw ConfigError("dp_oracle: state-action table " +
                          std::to_string(static_cast<long>(N) * S * actions) +
                          " exceeds the budget of " + std::to_string(cfg.max_table));

    const bool affine = static_cast<bool>(spec.f_affine);

    ValueSurface surface;
    surface.tgrid = cfg.tgrid;
    surface.sgrid = sgrid;
    surface.u.assign(static_cast<long>(N + 1) * S, 0.0);
    surface.dt_used = dt;
    surface.substeps_per_step = 1;
    surface.control_points = cfg.controls.size();
    surface.boundary_margin_frac = 0.10;

    for (long j = 0; j < S; ++j) surface.at(N, j) = spec.phi(sgrid.point(j));

    std::vector<double> slice(S), next(S);
    for (int i = N - 1; i >= 0; --i) {
        const double t = cfg.tgrid.node(i);
        for (long j = 0; j < S; ++j) next[j] = surface.at(i + 1, j);

        // Diffusion branch: expected next value under the locally consistent
        // chain plus the generator contribution.
        for (long j = 0; j < S; ++j) {
            const Vec x = sgrid.point(j);
            const auto idx = sgrid.unflat(j);
            double best = kInf;
            for (const auto& v : cfg.controls.points) {
                const Vec drift = spec.b(t, x, v);
                const Mat sig = spec.sigma(t, x, v);
                const Mat diff = sig * sig.transpose();
                GeneratorAffine gen;
                Vec b_tot = drift;
                if (affine) {
                    gen = spec.f_affine(t, x, v);
                    if (gen.az.size() == 0) gen.az = RowVec::Zero(spec.d);
                    b_tot += sig * gen.az.transpose();
                }
                // Expected increment relative to the center value:
                // interior axes contribute p_up (u_up - u_c) + p_dn (u_dn - u_c);
                // boundary axes use the inward one-sided extrapolation.
                double expect_delta = 0.0;
                double p_move = 0.0;
                Vec grad_central = Vec::Zero(n);
                for (int a = 0; a < n; ++a) {
                    const double dxa = sgrid.dx(a);
                    const long off = (n == 2 && a == 0) ? sgrid.nodes[1] : 1;
                    const bool at_lo = idx[a] == 0;
                    const bool at_hi = idx[a] == sgrid.nodes[a] - 1;
                    if (at_lo || at_hi) {
                        const long inward = at_lo ? off : -off;
                        const double du = (next[j + inward] - next[j]) * (at_lo ? 1 : -1) / dxa;
                        grad_central[a] = du;
                        expect_delta += dt * b_tot[a] * du;
                        continue;
                    }
                    const double p_up = dt * (0.5 * diff(a, a) + dxa * std::max(b_tot[a], 0.0)) /
                                        (dxa * dxa);
                    const double p_dn = dt * (0.5 * diff(a, a) + dxa * std::max(-b_tot[a], 0.0)) /
                                        (dxa * dxa);
                    p_move += p_up + p_dn;
                    expect_delta += p_up * (next[j + off] - next[j]) +
                                    p_dn * (next[j - off] - next[j]);
                    grad_central[a] = (next[j + off] - next[j - off]) / (2 * dxa);
                }
                if (p_move > 1.0 + 1e-12)
                    throw ConfigError(
                        "dp_oracle: transition probability outside [0,1]; use a coarser dt "
                        "(finer N) or a coarser space grid");
                double value = next[j] + expect_delta;
                if (affine) {
                    value += dt * (gen.a0 + gen.ay * next[j]);
                } else {
                    const RowVec z_fd = grad_central.transpose() * sig;
                    value += dt * spec.f(t, x, next[j], z_fd, v);
                }
                best = std::min(best, value);
            }
            slice[j] = best;
        }

        // Jump branch: within-slice relaxation to its fixed point.
        for (long pass = 0; pass < 4 * S + 16; ++pass) {
            double max_update = 0.0;
            for (long j = 0; j < S; ++j) {
                const Vec x = sgrid.point(j);
                for (int col = 0; col < spec.m; ++col) {
                    for (double h : jump_grid[col]) {
                        if (h == 0.0) continue;
                        Vec target = x + spec.G.col(col) * h;
                        bool inside = true;
                        for (int a = 0; a < n; ++a)
                            if (target[a] < sgrid.x_min[a] - 1e-12 ||
                                target[a] > sgrid.x_max[a] + 1e-12)
                                inside = false;
                        if (!inside) continue;
                        // Grid-aligned in the 1-D default; interpolate otherwise.
                        double pushed;
                        if (n == 1) {
                            const double s = (target[0] - sgrid.x_min[0]) / sgrid.dx(0);
                            const long j1 = std::clamp<long>(
                                static_cast<long>(std::lround(s)), 0, S - 1);
                            pushed = std::abs(s - j1) < 1e-9
                                         ? slice[j1]
                                         : [&] {
                                               const long jf = std::clamp<long>(
                                                   static_cast<long>(std::floor(s)), 0, S - 2);
                                               const double w = s - jf;
                                               return (1 - w) * slice[jf] + w * slice[jf + 1];
                                           }();
                        } else {
                            const double s0 = (target[0] - sgrid.x_min[0]) / sgrid.dx(0);
                            const double s1 = (target[1] - sgrid.x_min[1]) / sgrid.dx(1);
                            const long i0 = std::clamp<long>(static_cast<long>(std::floor(s0)), 0,
                                                             sgrid.nodes[0] - 2);
                            const long i1 = std::clamp<long>(static_cast<long>(std::floor(s1)), 0,
                                                             sgrid.nodes[1] - 2);
                            const double w0 = s0 - i0, w1 = s1 - i1;
                            const long stride = sgrid.nodes[1];
                            pushed = (1 - w0) * ((1 - w1) * slice[i0 * stride + i1] +
                                                 w1 * slice[i0 * stride + i1 + 1]) +
                                     w0 * ((1 - w1) * slice[(i0 + 1) * stride + i1] +
                                           w1 * slice[(i0 + 1) * stride + i1 + 1]);
                        }
                        const double cand = spec.K[col] * h + pushed;
                        if (cand < slice[j]) {
                            max_update = std::max(max_update, slice[j] - cand);
                            slice[j] = cand;
                        }
                    }
                }
            }
            if (max_update <= 1e-12) break;
        }

        for (long j = 0; j < S; ++j) {
            if (!std::isfinite(slice[j]))
                throw NumericError("dp_oracle: non-finite value at slice " + std::to_string(i));
            surface.at(i, j) = slice[j];
        }
    }
    return surface;
}

Report CrossCheckReport::to_report() const {
    Report r;
    r.add("tol_pde", tol_pde);
    r.add("tol_oracle", tol_oracle);
    for (size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const std::string prefix = "point_" + std::to_string(i) + ".";
        r.add(prefix + "t", p.t);
        for (int a = 0; a < p.x.size(); ++a)
            r.add(prefix + "x_" + std::to_string(a + 1), p.x[a]);
        r.add(prefix + "pde", p.pde);
        r.add(prefix + "oracle", p.oracle);
        r.add(prefix + "mc", p.mc);
        r.add(prefix + "mc_se", p.mc_se);
        r.add(prefix + "pde_vs_oracle", p.pde_vs_oracle);
        r.add(prefix + "mc_vs_pde", p.mc_vs_pde);
        r.add(prefix + "pass", p.pass_oracle && p.pass_mc);
    }
    r.add("pass", pass);
    return r;
}

CrossCheckReport cross_check(const ProblemSpec& spec,
                             const std::vector<std::pair<double, Vec>>& points,
                             const ValueSurface& pde_surface, const ValueSurface& oracle_surface,
                             const RegularControlPolicy& candidate_policy,
                             const SingularControlPath& candidate_xi, const McConfig& mc,
                             double tol_pde, double tol_oracle) {
    CrossCheckReport report;
    report.tol_pde = tol_pde >= 0 ? tol_pde : pde_surface.scheme_tol(spec);
    report.tol_oracle = tol_oracle >= 0 ? tol_oracle : oracle_surface.scheme_tol(spec);
    report.pass = true;

    for (const auto& [t, x] : points) {
        CrossCheckPoint point;
        point.t = t;
        point.x = x;
        point.pde = pde_surface.interp(t, x);
        point.oracle = oracle_surface.interp(t, x);
        const ValueWithError value = cost_functional(spec, t, x, candidate_policy, candidate_xi, mc);
        point.mc = value.value;
        point.mc_se = value.std_error;
        point.pde_vs_oracle = std::abs(point.pde - point.oracle);
        point.mc_vs_pde = std::abs(point.mc - point.pde);
        point.pass_oracle = point.pde_vs_oracle <= report.tol_pde + report.tol_oracle;
        point.pass_mc = point.mc_vs_pde <= 3.0 * point.mc_se + report.tol_pde;
        report.pass = report.pass && point.pass_oracle && point.pass_mc;
        report.points.push_back(std::move(point));
    }
    return report;
}

Report EstimateBatteryReport::to_report() const {
    Report r;
    for (size_t i = 0; i < deltas.size(); ++i) {
        const std::string prefix = "delta_" + std::to_string(deltas[i]);
        r.add(prefix + ".c_hat", c_hat[i]);
        r.add(prefix + ".c_hat_se", c_hat_se[i]);
    }
    r.add("c_finite", c_finite);
    r.add("c_monotone", c_monotone);
    for (size_t i = 0; i < yz_growth_ratio.size(); ++i)
        r.add("yz_growth_ratio_" + std::to_string(i), yz_growth_ratio[i]);
    r.add("yz_growth_max", yz_growth_max);
    for (size_t i = 0; i < window_gap.size(); ++i)
        r.add("window_gap_" + std::to_string(i), window_gap[i]);
    r.add("state4_slope", state4_slope);
    return r;
}

EstimateBatteryReport estimate_battery(const ProblemSpec& spec, const BatteryConfig& cfg) {
    spec.validate_structure();
    EstimateBatteryReport report;
    report.deltas = cfg.deltas;
    const SingularControlPath no_xi = SingularControlPath::zero(spec.m);

    // Control-perturbation stability with common random numbers: block the
    // ensemble into independent seed blocks and difference per block.
    const int blocks = std::max(2, cfg.seed_blocks);
    const int block_m = std::max(64, cfg.mc.M / blocks);
    report.c_finite = true;
    for (double delta : cfg.deltas) {
        const Vec v_pert = cfg.v_base + delta * cfg.v_direction;
        if (spec.k > 0 && !spec.U.contains(v_pert))
            throw ContractError("estimate_battery: perturbed control leaves U");
        std::vector<double> block_c(blocks);
        for (int b = 0; b < blocks; ++b) {
            McConfig mc = cfg.mc;
            mc.M = block_m;
            mc.seed = cfg.mc.seed + 7919 * static_cast<std::uint64_t>(b + 1);
            const ValueWithError base = cost_functional(
                spec, 0.0, cfg.x0, RegularControlPolicy::constant(cfg.v_base), no_xi, mc);
            const ValueWithError pert = cost_functional(
                spec, 0.0, cfg.x0, RegularControlPolicy::constant(v_pert), no_xi, mc);
            block_c[b] = std::abs(pert.value - base.value) / delta;
        }
        double mean = 0.0;
        for (double c : block_c) mean += c;
        mean /= blocks;
        double var = 0.0;
        for (double c : block_c) var += (c - mean) * (c - mean);
        var /= (blocks - 1);
        report.c_hat.push_back(mean);
        report.c_hat_se.push_back(std::sqrt(var / blocks));
        if (!std::isfinite(mean)) report.c_finite = false;
    }
    report.c_monotone = true;
    for (size_t i = 0; i + 1 < report.c_hat.size(); ++i) {
        const double slack =
            3.0 * std::sqrt(report.c_hat_se[i] * report.c_hat_se[i] +
                            report.c_hat_se[i + 1] * report.c_hat_se[i + 1]);
        if (report.c_hat[i + 1] > report.c_hat[i] + slack) report.c_monotone = false;
    }

    // Backward growth ratios (sup |Y|^2 + int |Z|^2) / (1 + |x|^2).
    for (double scale : cfg.x0_scales) {
        const Vec x0 = scale * (cfg.x0.norm() > 0 ? Vec(cfg.x0 / cfg.x0.norm()) : Vec::Ones(spec.n));
        const TimeGrid grid(0.0, spec.T, cfg.mc.steps);
        const PathBundle bundle =
            simulate_forward(spec, grid, x0, RegularControlPolicy::constant(cfg.v_base), no_xi,
                             cfg.mc.M, cfg.mc.seed);
        std::vector<double> terminal(bundle.M);
        for (int p = 0; p < bundle.M; ++p) terminal[p] = spec.phi(bundle.state_vec(p, grid.N));
        const BackwardSolution sol = solve_bsde(spec, bundle, terminal, cfg.mc.basis);
        double acc = 0.0;
        for (int p = 0; p < bundle.M; ++p) {
            double sup = 0.0, zint = 0.0;
            for (int i = 0; i <= grid.N; ++i) sup = std::max(sup, sol.y(p, i) * sol.y(p, i));
            for (int i = 0; i < grid.N; ++i)
                for (int a = 0; a < spec.d; ++a) zint += sol.z(p, i, a) * sol.z(p, i, a) * grid.dt();
            acc += sup + zint;
        }
        acc /= bundle.M;
        report.yz_growth_ratio.push_back(acc / (1.0 + x0.squaredNorm()));
    }
    report.yz_growth_max =
        *std::max_element(report.yz_growth_ratio.begin(), report.yz_growth_ratio.end());

    // Frozen-state vs moving-state window BSDEs over shrinking windows. The
    // driver is a smooth composite, F(s, x, y, z) = phi_t + L phi + f near the
    // test function phi(t, x) = |x|^2.
    const Vec v_fixed = cfg.v_base;
    for (double delta : cfg.deltas) {
        const TimeGrid wgrid(0.0, delta, std::max(8, static_cast<int>(cfg.mc.steps * delta)));
        const PathBundle bundle =
            simulate_forward(spec, wgrid, cfg.x0, RegularControlPolicy::constant(v_fixed), no_xi,
                             cfg.mc.M, cfg.mc.seed + 33);
        auto phi_val = [](const Vec& x) { return x.squaredNorm(); };
        auto phi_grad = [](const Vec& x) { return Vec(2.0 * x); };
        auto driver = [&](double t, const Vec& x, double y, const RowVec& z, const Vec& v) {
            const Mat sig = spec.sigma(t, x, v);
            const Vec grad = phi_grad(x);
            const double lphi = (sig * sig.transpose()).trace() + grad.dot(spec.b(t, x, v));
            const RowVec zshift = z + grad.transpose() * sig;
            return lphi + spec.f(t, x, y + phi_val(x), zshift, v);
        };
        // Pathwise backward recursions on the shared bundle, terminal 0.
        const int N = wgrid.N;
        const double dt = wgrid.dt();
        double gap_mean = 0.0;
        for (int p = 0; p < bundle.M; ++p) {
            double y_move = 0.0, y_frozen = 0.0;
            for (int i = N - 1; i >= 0; --i) {
                const double t = wgrid.node(i);
                const Vec x = bundle.state_vec(p, i);
                const RowVec z0 = RowVec::Zero(spec.d);
                y_move += driver(t, x, y_move, z0, v_fixed) * dt;
                y_frozen += driver(t, cfg.x0, y_frozen, z0, v_fixed) * dt;
            }
            gap_mean += std::abs(y_move - y_frozen);
        }
        gap_mean /= bundle.M;
        report.window_gap.push_back(gap_mean);
    }
    // Least-squares slope of log gap against log delta.
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const int count = static_cast<int>(cfg.deltas.size());
        for (int i = 0; i < count; ++i) {
            const double lx = std::log(cfg.deltas[i]);
            const double ly = std::log(std::max(report.window_gap[i], 1e-300));
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        report.state4_slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    }
    return report;
}

}  // namespace sincon
