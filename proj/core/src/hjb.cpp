#include "sincon/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sincon/csv.hpp"
#include "sincon/parallel.hpp"

namespace sincon {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-control finite-difference coefficients at every node:
//   contribution_j = sum_axis [ Pa u_{j+axis} + Qa u_{j-axis} ] + R u_j + C.
// Interior: central curvature and drift upwinded by the effective drift
// b_tot = b + sigma az^T (affine generator fast path). Boundary along an
// axis: inward one-sided first difference, curvature dropped (exact on
// linear profiles, which is what the truncation margin assumes).
struct ControlTables {
    // Axis-major: coeff[axis][node]. For n = 1 only axis 0 is used.
    std::vector<std::vector<double>> P, Q;
    std::vector<double> R, C;
    double stability = 0.0;  // max_j (sum coeffs away from center - min(ay,0))
};

struct Stepper {
    const ProblemSpec& spec;
    const SpaceGrid& sgrid;
    const ControlGrid& controls;
    bool affine;
    std::vector<ControlTables> tables;  // one per control when coefficients are frozen
    double tables_time = std::numeric_limits<double>::quiet_NaN();

    Stepper(const ProblemSpec& s, const SpaceGrid& g, const ControlGrid& c)
        : spec(s), sgrid(g), controls(c), affine(static_cast<bool>(s.f_affine)) {}

    ControlTables build(const Vec& v, double t) const {
        const int n = sgrid.dim();
        const long S = sgrid.total_nodes();
        ControlTables tab;
        tab.P.assign(n, std::vector<double>(S, 0.0));
        tab.Q.assign(n, std::vector<double>(S, 0.0));
        tab.R.assign(S, 0.0);
        tab.C.assign(S, 0.0);

        for (long j = 0; j < S; ++j) {
            const Vec x = sgrid.point(j);
            const auto idx = sgrid.unflat(j);
            const Vec drift = spec.b(t, x, v);
            const Mat sig = spec.sigma(t, x, v);
            const Mat diff = sig * sig.transpose();
            GeneratorAffine gen = spec.f_affine(t, x, v);
            if (gen.az.size() == 0) gen.az = RowVec::Zero(spec.d);
            const Vec b_tot = drift + sig * gen.az.transpose();

            double away = 0.0;
            double rr = gen.ay;
            for (int a = 0; a < n; ++a) {
                if (n == 2) {
                    const int other = 1 - a;
                    if (std::abs(diff(a, other)) > 1e-13)
                        throw ConfigError(
                            "solve_hjb_vi: n=2 supports diagonal diffusion only");
                }
                const double dxa = sgrid.dx(a);
                const bool at_lo = idx[a] == 0;
                const bool at_hi = idx[a] == sgrid.nodes[a] - 1;
                double pa = 0.0, qa = 0.0;
                if (at_lo) {
                    pa = b_tot[a] / dxa;  // inward difference, any drift sign
                } else if (at_hi) {
                    qa = -b_tot[a] / dxa;
                } else {
                    const double cd = 0.5 * diff(a, a) / (dxa * dxa);
                    const double bp = std::max(b_tot[a], 0.0) / dxa;
                    const double bm = std::min(b_tot[a], 0.0) / dxa;
                    pa = cd + bp;
                    qa = cd - bm;
                }
                tab.P[a][j] = pa;
                tab.Q[a][j] = qa;
                rr -= pa + qa;
                away += std::abs(pa) + std::abs(qa);
            }
            tab.R[j] = rr;
            tab.C[j] = gen.a0;
            tab.stability = std::max(tab.stability, away + std::max(0.0, -gen.ay));
        }
        return tab;
    }

    void ensure_tables(double t) {
        if (!affine) return;
        if (spec.autonomous && !tables.empty()) return;
        if (!spec.autonomous && tables_time == t && !tables.empty()) return;
        tables.clear();
        tables.reserve(controls.points.size());
        for (const auto& v : controls.points) tables.push_back(build(v, t));
        tables_time = t;
    }

    double stability_bound(double t) {
        if (affine) {
            ensure_tables(t);
            double s = 0.0;
            for (const auto& tab : tables) s = std::max(s, tab.stability);
            return s;
        }
        // Generic generator: curvature + drift part only; the z-coupling of f
        // is handled with central differences and is not folded into the
        // bound (documented limitation of the generic path).
        const int n = sgrid.dim();
        const long S = sgrid.total_nodes();
        double out = 0.0;
        for (const auto& v : controls.points) {
            for (long j = 0; j < S; ++j) {
                const Vec x = sgrid.point(j);
                const Vec drift = spec.b(t, x, v);
                const Mat sig = spec.sigma(t, x, v);
                const Mat diff = sig * sig.transpose();
                double away = 0.0;
                for (int a = 0; a < n; ++a)
                    away += diff(a, a) / (sgrid.dx(a) * sgrid.dx(a)) +
                            std::abs(drift[a]) / sgrid.dx(a);
                out = std::max(out, away);
            }
        }
        return out;
    }

    // One explicit PDE sub-step: next -> out (min over the control grid).
    void pde_phase(const std::vector<double>& next, std::vector<double>& out, double t,
                   double dt) {
        const int n = sgrid.dim();
        const long S = sgrid.total_nodes();
        if (affine) {
            ensure_tables(t);
            const long stride1 = n == 2 ? sgrid.nodes[1] : 0;
            std::vector<double>& val = scratch_;
            val.assign(S, kInf);
            for (size_t c = 0; c < tables.size(); ++c) {
                const auto& tab = tables[c];
                if (n == 1) {
                    const double* P = tab.P[0].data();
                    const double* Q = tab.Q[0].data();
                    const double* R = tab.R.data();
                    const double* Cc = tab.C.data();
                    const double* un = next.data();
                    double* vl = val.data();
                    // j = 0 and j = S-1 have Q[0] = P[S-1] = 0; neighbor reads
                    // are clamped below.
                    {
                        const double cand = P[0] * un[1] + R[0] * un[0] + Cc[0];
                        vl[0] = std::min(vl[0], cand);
                    }
                    for (long j = 1; j < S - 1; ++j) {
                        const double cand =
                            P[j] * un[j + 1] + Q[j] * un[j - 1] + R[j] * un[j] + Cc[j];
                        vl[j] = std::min(vl[j], cand);
                    }
                    {
                        const long j = S - 1;
                        const double cand = Q[j] * un[j - 1] + R[j] * un[j] + Cc[j];
                        vl[j] = std::min(vl[j], cand);
                    }
                } else {
                    for (long j = 0; j < S; ++j) {
                        const auto idx = sgrid.unflat(j);
                        double cand = tab.R[j] * next[j] + tab.C[j];
                        // axis 0 neighbors are +-nodes[1] apart, axis 1 +-1
                        const long off0 = stride1, off1 = 1;
                        if (idx[0] + 1 < sgrid.nodes[0]) cand += tab.P[0][j] * next[j + off0];
                        if (idx[0] > 0) cand += tab.Q[0][j] * next[j - off0];
                        if (idx[1] + 1 < sgrid.nodes[1]) cand += tab.P[1][j] * next[j + off1];
                        if (idx[1] > 0) cand += tab.Q[1][j] * next[j - off1];
                        val[j] = std::min(val[j], cand);
                    }
                }
            }
            for (long j = 0; j < S; ++j) out[j] = next[j] + dt * val[j];
            return;
        }

        // Generic path: evaluate the callable generator with central-z proxy.
        parallel_for(0, S, [&](long lo, long hi) {
            for (long j = lo; j < hi; ++j) {
                const Vec x = sgrid.point(j);
                const auto idx = sgrid.unflat(j);
                double best = kInf;
                for (const auto& v : controls.points) {
                    const Vec drift = spec.b(t, x, v);
                    const Mat sig = spec.sigma(t, x, v);
                    const Mat diff = sig * sig.transpose();
                    double acc = 0.0;
                    Vec grad_central(n);
                    for (int a = 0; a < n; ++a) {
                        const double dxa = sgrid.dx(a);
                        const long off = (n == 2 && a == 0) ? sgrid.nodes[1] : 1;
                        const bool at_lo = idx[a] == 0;
                        const bool at_hi = idx[a] == sgrid.nodes[a] - 1;
                        if (at_lo) {
                            const double du = (next[j + off] - next[j]) / dxa;
                            grad_central[a] = du;
                            acc += drift[a] * du;
                        } else if (at_hi) {
                            const double du = (next[j] - next[j - off]) / dxa;
                            grad_central[a] = du;
                            acc += drift[a] * du;
                        } else {
                            const double d2 =
                                (next[j + off] - 2 * next[j] + next[j - off]) / (dxa * dxa);
                            acc += 0.5 * diff(a, a) * d2;
                            grad_central[a] = (next[j + off] - next[j - off]) / (2 * dxa);
                            const double dup = (next[j + off] - next[j]) / dxa;
                            const double dun = (next[j] - next[j - off]) / dxa;
                            acc += std::max(drift[a], 0.0) * dup + std::min(drift[a], 0.0) * dun;
                        }
                    }
                    const RowVec z = grad_central.transpose() * sig;
                    acc += spec.f(t, x, next[j], z, v);
                    best = std::min(best, acc);
                }
                out[j] = next[j] + dt * best;
            }
        });
    }

private:
    std::vector<double> scratch_;
};

}  // namespace

// n = m = 1 uses the exact directional sweep (single pass, grid-aligned
// pushes); the general (n, m) <= (2, 2) case relaxes with interpolated pushes
// until the largest update drops below tol.
void enforce_gradient_constraint(std::vector<double>& u, const ProblemSpec& spec,
                                 const SpaceGrid& sgrid, double tol) {
    const long S = sgrid.total_nodes();
    if (spec.n == 1 && spec.m == 1) {
        const double g = spec.G(0, 0);
        if (g == 0.0) return;
        const double step_cost = spec.K[0] * sgrid.dx(0) / std::abs(g);
        if (g > 0) {
            for (long j = S - 2; j >= 0; --j) u[j] = std::min(u[j], u[j + 1] + step_cost);
        } else {
            for (long j = 1; j < S; ++j) u[j] = std::min(u[j], u[j - 1] + step_cost);
        }
        return;
    }

    auto interp = [&](const Vec& x) -> double {
        // Multilinear interpolation; callers guarantee x stays in-grid.
        if (sgrid.dim() == 1) {
            const double s = (x[0] - sgrid.x_min[0]) / sgrid.dx(0);
            const long j0 = std::clamp<long>(static_cast<long>(std::floor(s)), 0,
                                             sgrid.nodes[0] - 2);
            const double w = s - j0;
            return (1 - w) * u[j0] + w * u[j0 + 1];
        }
        const double s0 = (x[0] - sgrid.x_min[0]) / sgrid.dx(0);
        const double s1 = (x[1] - sgrid.x_min[1]) / sgrid.dx(1);
        const long i0 = std::clamp<long>(static_cast<long>(std::floor(s0)), 0, sgrid.nodes[0] - 2);
        const long i1 = std::clamp<long>(static_cast<long>(std::floor(s1)), 0, sgrid.nodes[1] - 2);
        const double w0 = s0 - i0, w1 = s1 - i1;
        const long stride = sgrid.nodes[1];
        return (1 - w0) * ((1 - w1) * u[i0 * stride + i1] + w1 * u[i0 * stride + i1 + 1]) +
               w0 * ((1 - w1) * u[(i0 + 1) * stride + i1] + w1 * u[(i0 + 1) * stride + i1 + 1]);
    };

    const long max_passes = 4 * S + 16;
    for (long pass = 0; pass < max_passes; ++pass) {
        double max_update = 0.0;
        for (long j = 0; j < S; ++j) {
            const Vec x = sgrid.point(j);
            for (int col = 0; col < spec.m; ++col) {
                const Vec g = spec.G.col(col);
                const double gmax = g.cwiseAbs().maxCoeff();
                if (gmax == 0.0) continue;
                double dx_min = sgrid.dx(0);
                for (int a = 1; a < sgrid.dim(); ++a) dx_min = std::min(dx_min, sgrid.dx(a));
                const double h = dx_min / gmax;
                const Vec target = x + g * h;
                bool inside = true;
                for (int a = 0; a < sgrid.dim(); ++a)
                    if (target[a] < sgrid.x_min[a] - 1e-12 || target[a] > sgrid.x_max[a] + 1e-12)
                        inside = false;
                if (!inside) continue;
                const double cand = interp(target) + spec.K[col] * h;
                if (cand < u[j]) {
                    max_update = std::max(max_update, u[j] - cand);
                    u[j] = cand;
                }
            }
        }
        if (max_update <= tol) break;
    }
}

double ValueSurface::interp_space(int slice, const Vec& x) const {
    // Multilinear inside the grid; out-of-grid queries extrapolate linearly
    // from the edge cell, matching the truncation assumption that the value
    // behaves linearly past the box.
    const long S = sgrid.total_nodes();
    const double* uu = u.data() + static_cast<long>(slice) * S;
    if (sgrid.dim() == 1) {
        const double s = (x[0] - sgrid.x_min[0]) / sgrid.dx(0);
        const long j0 = std::clamp<long>(static_cast<long>(std::floor(s)), 0, sgrid.nodes[0] - 2);
        const double w = s - j0;
        return (1 - w) * uu[j0] + w * uu[j0 + 1];
    }
    const double s0 = (x[0] - sgrid.x_min[0]) / sgrid.dx(0);
    const double s1 = (x[1] - sgrid.x_min[1]) / sgrid.dx(1);
    const long i0 = std::clamp<long>(static_cast<long>(std::floor(s0)), 0, sgrid.nodes[0] - 2);
    const long i1 = std::clamp<long>(static_cast<long>(std::floor(s1)), 0, sgrid.nodes[1] - 2);
    const double w0 = s0 - i0, w1 = s1 - i1;
    const long stride = sgrid.nodes[1];
    return (1 - w0) * ((1 - w1) * uu[i0 * stride + i1] + w1 * uu[i0 * stride + i1 + 1]) +
           w0 * ((1 - w1) * uu[(i0 + 1) * stride + i1] + w1 * uu[(i0 + 1) * stride + i1 + 1]);
}

double ValueSurface::interp(double t, const Vec& x) const {
    const double s = (t - tgrid.t0) / tgrid.dt();
    const int i0 = std::clamp(static_cast<int>(std::floor(s)), 0, tgrid.N - 1);
    const double w = std::clamp(s - i0, 0.0, 1.0);
    return (1 - w) * interp_space(i0, x) + w * interp_space(i0 + 1, x);
}

bool ValueSurface::in_grid(const Vec& x) const {
    for (int a = 0; a < sgrid.dim(); ++a)
        if (x[a] < sgrid.x_min[a] - 1e-12 || x[a] > sgrid.x_max[a] + 1e-12) return false;
    return true;
}

std::pair<int, int> ValueSurface::interior_range(int axis) const {
    const int count = sgrid.nodes[axis];
    int margin = static_cast<int>(std::ceil(boundary_margin_frac * count));
    margin = std::max(margin, 1);
    return {margin, count - margin};
}

double ValueSurface::scheme_tol(const ProblemSpec& spec) const {
    double dx_max = sgrid.dx(0);
    for (int a = 1; a < sgrid.dim(); ++a) dx_max = std::max(dx_max, sgrid.dx(a));
    return 2.0 * dx_max * spec.K.maxCoeff();
}

ValueSurface solve_hjb_vi(const ProblemSpec& spec, const TimeGrid& tgrid, const SpaceGrid& sgrid,
                          const ControlGrid& control_grid, const HjbOptions& opts) {
    spec.validate_structure();
    tgrid.validate();
    sgrid.validate();
    if (sgrid.dim() != spec.n) throw ContractError("solve_hjb_vi: grid dimension != n");
    if (control_grid.points.empty()) throw ContractError("solve_hjb_vi: empty control grid");
    if (tgrid.t0 < -1e-12 || std::abs(tgrid.T - spec.T) > 1e-9)
        throw ContractError(
            "solve_hjb_vi: the time grid must end at the horizon T, where u(T,.) = Phi");

    const long S = sgrid.total_nodes();
    const int N = tgrid.N;
    const double dt_store = tgrid.dt();

    ValueSurface surface;
    surface.tgrid = tgrid;
    surface.sgrid = sgrid;
    surface.u.assign(static_cast<long>(N + 1) * S, 0.0);
    surface.cfl_factor = opts.cfl_factor;
    surface.control_points = control_grid.size();
    surface.boundary_margin_frac = opts.boundary_margin_frac;

    // Terminal slice: exact copy of Phi.
    for (long j = 0; j < S; ++j) surface.at(N, j) = spec.phi(sgrid.point(j));

    Stepper stepper(spec, sgrid, control_grid);
    // Autonomous coefficients: one stability scan pins the sub-step count for
    // the whole horizon. Time-dependent coefficients are rescanned per stored
    // step (their tables are rebuilt every sub-step anyway).
    long substeps = 1;
    if (spec.autonomous) {
        const double stability = stepper.stability_bound(tgrid.t0);
        if (stability > 0.0)
            substeps = std::max<long>(
                1, static_cast<long>(std::ceil(dt_store * stability / opts.cfl_factor)));
        if (substeps * static_cast<long>(N) > opts.max_substeps)
            throw ConfigError("solve_hjb_vi: CFL requires " + std::to_string(substeps * N) +
                              " sub-steps, over the budget of " +
                              std::to_string(opts.max_substeps) +
                              "; coarsen dx or raise the budget");
    }
    surface.dt_used = dt_store / substeps;
    surface.substeps_per_step = substeps;
    long substeps_spent = 0;

    std::vector<double> work(S), next(S);
    for (int i = N - 1; i >= 0; --i) {
        if (!spec.autonomous) {
            const double stability = std::max(stepper.stability_bound(tgrid.node(i)),
                                              stepper.stability_bound(tgrid.node(i + 1)));
            substeps = stability > 0.0
                           ? std::max<long>(1, static_cast<long>(std::ceil(
                                                   dt_store * stability / opts.cfl_factor)))
                           : 1;
            substeps_spent += substeps;
            if (substeps_spent > opts.max_substeps)
                throw ConfigError("solve_hjb_vi: CFL sub-step budget exceeded at slice " +
                                  std::to_string(i));
            surface.dt_used = std::min(surface.dt_used, dt_store / substeps);
            surface.substeps_per_step = std::max(surface.substeps_per_step, substeps);
        }
        const double dt_sub = dt_store / substeps;
        for (long j = 0; j < S; ++j) next[j] = surface.at(i + 1, j);
        for (long s = 0; s < substeps; ++s) {
            const double t_sub = tgrid.node(i + 1) - (s + 1) * dt_sub;
            stepper.pde_phase(next, work, t_sub, dt_sub);
            enforce_gradient_constraint(work, spec, sgrid, opts.sweep_tol);
            std::swap(work, next);
        }
        for (long j = 0; j < S; ++j) {
            if (!std::isfinite(next[j]))
                throw NumericError("solve_hjb_vi: non-finite value at slice " +
                                   std::to_string(i) + " node " + std::to_string(j));
            surface.at(i, j) = next[j];
        }
    }
    return surface;
}

InactionMask extract_inaction_region(const ValueSurface& surface, const ProblemSpec& spec,
                                     double tol) {
    if (tol < 0) tol = surface.scheme_tol(spec);
    const auto& sgrid = surface.sgrid;
    const long S = sgrid.total_nodes();
    InactionMask mask;
    mask.tgrid = surface.tgrid;
    mask.sgrid = sgrid;
    mask.tol = tol;
    mask.inaction.assign(static_cast<long>(surface.tgrid.N + 1) * S, 0);

    double dx_min = sgrid.dx(0);
    for (int a = 1; a < sgrid.dim(); ++a) dx_min = std::min(dx_min, sgrid.dx(a));

    for (int i = 0; i <= surface.tgrid.N; ++i) {
        for (long j = 0; j < S; ++j) {
            const Vec x = sgrid.point(j);
            // Per-unit-push margin screened along each singular column; a
            // combined push chains single-column pushes, so the columnwise
            // minimum over all nodes bounds it as well.
            double margin = kInf;
            bool any_push = false;
            for (int col = 0; col < spec.m; ++col) {
                const Vec g = spec.G.col(col);
                const double gmax = g.cwiseAbs().maxCoeff();
                if (gmax == 0.0) continue;
                const double h_unit = dx_min / gmax;
                for (int l = 1;; ++l) {
                    const double h = l * h_unit;
                    const Vec target = x + g * h;
                    bool inside = true;
                    for (int a = 0; a < sgrid.dim(); ++a)
                        if (target[a] < sgrid.x_min[a] - 1e-12 ||
                            target[a] > sgrid.x_max[a] + 1e-12)
                            inside = false;
                    if (!inside) break;
                    any_push = true;
                    const double push_margin =
                        (surface.interp_space(i, target) + spec.K[col] * h - surface.at(i, j)) / h;
                    margin = std::min(margin, push_margin);
                }
            }
            // Nodes with no in-grid push stay unclassified (mask = 0).
            mask.inaction[static_cast<long>(i) * S + j] =
                (any_push && margin > tol) ? 1 : 0;
        }
    }
    return mask;
}

double jump_inequality_check(const ValueSurface& surface, const ProblemSpec& spec,
                             const std::vector<Vec>& h_samples) {
    const auto& sgrid = surface.sgrid;
    const long S = sgrid.total_nodes();
    double worst = -kInf;
    for (const auto& h : h_samples) {
        if (h.size() != spec.m)
            throw ContractError("jump_inequality_check: h sample dimension != m");
        if ((h.array() < 0).any())
            throw ContractError("jump_inequality_check: h must be nonnegative");
        if ((h.array() == 0.0).all()) {
            worst = std::max(worst, 0.0);  // zero push contributes exactly zero
            continue;
        }
        const Vec push = spec.G * h;
        const double cost = spec.K.dot(h);
        for (int i = 0; i <= surface.tgrid.N; ++i) {
            for (long j = 0; j < S; ++j) {
                const Vec x = sgrid.point(j);
                const Vec target = x + push;
                if (!surface.in_grid(target)) continue;
                const double violation =
                    surface.at(i, j) - surface.interp_space(i, target) - cost;
                worst = std::max(worst, violation);
            }
        }
    }
    return worst == -kInf ? 0.0 : worst;
}

DppResidualReport dpp_residual(const ProblemSpec& spec, const ValueSurface& surface,
                               int t_index, int delta_steps, const Vec& x0,
                               const ControlGrid& control_grid, const DppSearchConfig& search,
                               const McConfig& mc) {
    if (t_index + delta_steps > surface.tgrid.N)
        throw ContractError("dpp_residual: t_index + delta_steps exceeds the grid");
    const double t = surface.tgrid.node(t_index);
    const double t1 = surface.tgrid.node(t_index + delta_steps);
    const int eta_slice = t_index + delta_steps;

    TerminalFn eta = [&surface, eta_slice](const Vec& x) {
        return surface.interp_space(eta_slice, x);
    };

    DppResidualReport report;
    report.u_value = surface.interp_space(t_index, x0);
    report.family_inf = kInf;

    McConfig run = mc;
    for (const auto& v : control_grid.points) {
        const auto policy = RegularControlPolicy::constant(v);
        for (int col = 0; col < spec.m; ++col) {
            for (double jump : search.jump_sizes) {
                if (col > 0 && jump == 0.0) continue;  // xi == 0 counted once
                SingularControlPath xi = SingularControlPath::zero(spec.m);
                if (jump > 0.0) {
                    Vec size = Vec::Zero(spec.m);
                    size[col] = jump;
                    xi = SingularControlPath::single_jump(spec.m, 0, size);
                }
                const ValueWithError value =
                    backward_semigroup(spec, t, t1, x0, policy, xi, eta, run);
                if (value.value < report.family_inf) {
                    report.family_inf = value.value;
                    report.family_inf_se = value.std_error;
                    report.best_control = v;
                    report.best_jump = jump;
                }
            }
        }
    }
    report.residual = report.family_inf - report.u_value;
    return report;
}

ViscosityReport viscosity_residual_check(const ValueSurface& surface, const ProblemSpec& spec,
                                         const std::vector<std::pair<int, Vec>>& test_points,
                                         const ControlGrid& control_grid, double tol) {
    const auto& sgrid = surface.sgrid;
    if (tol < 0) tol = surface.scheme_tol(spec);
    ViscosityReport report;
    report.tol = tol;
    report.pass = true;

    for (const auto& [slice, x] : test_points) {
        if (slice < 0 || slice >= surface.tgrid.N)
            throw ContractError("viscosity_residual_check: slice must be interior in time");
        std::vector<int> idx(sgrid.dim());
        for (int a = 0; a < sgrid.dim(); ++a) {
            const int j = static_cast<int>(std::lround((x[a] - sgrid.x_min[a]) / sgrid.dx(a)));
            if (j < 2 || j > sgrid.nodes[a] - 3)
                throw ContractError(
                    "viscosity_residual_check: point must be >= 2 nodes from the boundary");
            idx[a] = j;
        }
        const long j = sgrid.flat(idx);
        const Vec xs = sgrid.point(j);
        const double t = surface.tgrid.node(slice);
        const double dt = surface.tgrid.dt();
        const double u_t = (surface.at(slice + 1, j) - surface.at(slice, j)) / dt;

        Vec grad(sgrid.dim());
        Mat hess = Mat::Zero(sgrid.dim(), sgrid.dim());
        for (int a = 0; a < sgrid.dim(); ++a) {
            const long off = (sgrid.dim() == 2 && a == 0) ? sgrid.nodes[1] : 1;
            const double dxa = sgrid.dx(a);
            grad[a] = (surface.at(slice, j + off) - surface.at(slice, j - off)) / (2 * dxa);
            hess(a, a) = (surface.at(slice, j + off) - 2 * surface.at(slice, j) +
                          surface.at(slice, j - off)) /
                         (dxa * dxa);
        }

        ViscosityPointReport point;
        point.t = t;
        point.x = xs;
        point.constraint_branch = (grad.transpose() * spec.G + spec.K).minCoeff();

        double best = kInf;
        const double u_here = surface.at(slice, j);
        for (const auto& v : control_grid.points) {
            const Mat sig = spec.sigma(t, xs, v);
            const RowVec z = grad.transpose() * sig;
            const double ham = 0.5 * (sig * sig.transpose() * hess).trace() +
                               grad.dot(spec.b(t, xs, v)) + spec.f(t, xs, u_here, z, v);
            best = std::min(best, ham);
        }
        point.pde_branch = u_t + best;
        point.residual = std::min(point.constraint_branch, point.pde_branch);
        point.pass = std::abs(point.residual) <= tol;
        report.pass = report.pass && point.pass;
        report.points.push_back(std::move(point));
    }
    return report;
}

Report VerificationReport::to_report() const {
    Report r;
    r.add("v11_inaction", v11_inaction);
    r.add("v11_min_margin", v11_min_margin);
    r.add("v22_flat_off", v22_flat_off);
    r.add("v22_integral", v22_integral);
    r.add("v33_hamiltonian", v33_hamiltonian);
    r.add("v33_max_gap", v33_max_gap);
    r.add("v44_jump_consistency", v44_jump_consistency);
    r.add("v44_max_gap", v44_max_gap);
    r.add("v55_value_match", v55_value_match);
    r.add("v55_gap", v55_gap);
    r.add("v55_tol", v55_tol);
    r.add("cost_value", cost_value);
    r.add("cost_se", cost_se);
    r.add("surface_value", surface_value);
    r.add("paths_exited_grid", static_cast<double>(paths_exited_grid));
    r.add("pass", pass);
    return r;
}

VerificationReport verification_check(const ProblemSpec& spec, const ValueSurface& surface,
                                      const RegularControlPolicy& candidate_policy,
                                      const SingularRule& candidate_xi_rule, const Vec& x0,
                                      const ControlGrid& control_grid, const McConfig& mc) {
    const double t0 = surface.tgrid.t0;
    const TimeGrid grid(t0, surface.tgrid.T, mc.steps);
    const double dt = grid.dt();
    const double tol = surface.scheme_tol(spec);

    const PathBundle bundle =
        simulate_forward_rule(spec, grid, x0, candidate_policy, candidate_xi_rule, mc.M, mc.seed);

    VerificationReport report;
    report.v11_min_margin = kInf;
    report.v33_max_gap = 0.0;
    report.v44_max_gap = 0.0;

    const auto& sgrid = surface.sgrid;
    auto gradient_at = [&](int slice, const Vec& x) -> Vec {
        Vec grad(sgrid.dim());
        for (int a = 0; a < sgrid.dim(); ++a) {
            Vec xp = x, xm = x;
            const double dxa = sgrid.dx(a);
            xp[a] = std::min(xp[a] + dxa, sgrid.x_max[a]);
            xm[a] = std::max(xm[a] - dxa, sgrid.x_min[a]);
            grad[a] = (surface.interp_space(slice, xp) - surface.interp_space(slice, xm)) /
                      (xp[a] - xm[a]);
        }
        return grad;
    };
    auto slice_of = [&](double t) {
        const double s = (t - surface.tgrid.t0) / surface.tgrid.dt();
        return std::clamp(static_cast<int>(std::lround(s)), 0, surface.tgrid.N);
    };

    double v22_acc = 0.0;
    const int path_stride = std::max(1, bundle.M / 64);
    const int step_stride = std::max(1, grid.N / 32);
    for (int p = 0; p < bundle.M; ++p) {
        bool exited = false;
        for (int i = 0; i < grid.N; ++i) {
            const Vec x = bundle.state_vec(p, i);
            if (!surface.in_grid(x)) {
                exited = true;
                continue;
            }
            const double t = grid.node(i);
            const int slice = slice_of(t);
            const Vec dxi = bundle.xi_increment(p, i);
            const bool sampled = (p % path_stride == 0) && (i % step_stride == 0);
            if (sampled || (dxi.array() != 0).any()) {
                const Vec grad = gradient_at(slice, x);
                const RowVec slack = grad.transpose() * spec.G + spec.K;
                report.v11_min_margin = std::min(report.v11_min_margin, slack.minCoeff());
                if ((dxi.array() != 0).any()) {
                    v22_acc += slack.dot(dxi) / bundle.M;
                    // v44: value drop across the applied jump equals the cost.
                    const Vec push = spec.G * dxi;
                    const double gap = surface.interp_space(slice, x) -
                                       surface.interp_space(slice, x + push) -
                                       spec.K.dot(dxi);
                    report.v44_max_gap = std::max(report.v44_max_gap, std::abs(gap));
                }
                if (sampled) {
                    // v33: candidate control attains the control-grid minimum.
                    const Vec v_cand = bundle.control_at(p, i);
                    const double u_here = surface.interp_space(slice, x);
                    auto hamiltonian = [&](const Vec& v) {
                        const Mat sig = spec.sigma(t, x, v);
                        // Curvature proxy from the surface along each axis.
                        double curv = 0.0;
                        for (int a = 0; a < sgrid.dim(); ++a) {
                            Vec xp = x, xm = x;
                            const double dxa = sgrid.dx(a);
                            xp[a] += dxa;
                            xm[a] -= dxa;
                            if (!surface.in_grid(xp) || !surface.in_grid(xm)) continue;
                            const double d2 = (surface.interp_space(slice, xp) - 2 * u_here +
                                               surface.interp_space(slice, xm)) /
                                              (dxa * dxa);
                            curv += (sig * sig.transpose())(a, a) * d2;
                        }
                        const Vec grad2 = gradient_at(slice, x);
                        const RowVec z = grad2.transpose() * sig;
                        return 0.5 * curv + grad2.dot(spec.b(t, x, v)) +
                               spec.f(t, x, u_here, z, v);
                    };
                    const double h_cand = hamiltonian(v_cand);
                    double h_min = kInf;
                    for (const auto& v : control_grid.points) h_min = std::min(h_min, hamiltonian(v));
                    report.v33_max_gap = std::max(report.v33_max_gap, h_cand - h_min);
                }
            }
        }
        if (exited) ++report.paths_exited_grid;
    }

    report.v22_integral = v22_acc;
    report.v11_inaction = report.v11_min_margin > tol;
    report.v22_flat_off = std::abs(report.v22_integral) <= tol;
    report.v33_hamiltonian = report.v33_max_gap <= tol;
    report.v44_jump_consistency = report.v44_max_gap <= tol;

    // v55: candidate cost vs the surface value at (t0, x0).
    std::vector<double> terminal(bundle.M);
    for (int p = 0; p < bundle.M; ++p) terminal[p] = spec.phi(bundle.state_vec(p, grid.N));
    const BackwardSolution sol = solve_bsde(spec, bundle, terminal, mc.basis, mc.two_pass);
    report.cost_value = sol.y0;
    report.cost_se = sol.y0_std_error;
    report.surface_value = surface.interp_space(0, x0);
    report.v55_gap = std::abs(report.cost_value - report.surface_value);
    double dx_max = sgrid.dx(0);
    for (int a = 1; a < sgrid.dim(); ++a) dx_max = std::max(dx_max, sgrid.dx(a));
    report.v55_tol = 3.0 * report.cost_se + 2.0 * dx_max;
    report.v55_value_match = report.v55_gap <= report.v55_tol;

    report.pass = report.v11_inaction && report.v22_flat_off && report.v33_hamiltonian &&
                  report.v44_jump_consistency && report.v55_value_match;
    return report;
}

double closed_form_section4(double t, double x, double T) {
    if (t < 0 || t > T) throw ContractError("closed_form_section4: need 0 <= t <= T");
    return x > 0 ? std::exp(t - T) * x : std::exp(T - t) * x;
}

RegularityEstimate regularity_estimate(const ValueSurface& surface) {
    RegularityEstimate est;
    const auto& sgrid = surface.sgrid;
    const long S = sgrid.total_nodes();
    for (int i = 0; i <= surface.tgrid.N; ++i) {
        for (long j = 0; j < S; ++j) {
            const auto idx = sgrid.unflat(j);
            for (int a = 0; a < sgrid.dim(); ++a) {
                if (idx[a] + 1 >= sgrid.nodes[a]) continue;
                const long off = (sgrid.dim() == 2 && a == 0) ? sgrid.nodes[1] : 1;
                est.lipschitz_x =
                    std::max(est.lipschitz_x,
                             std::abs(surface.at(i, j + off) - surface.at(i, j)) / sgrid.dx(a));
            }
        }
    }
    const double dt = surface.tgrid.dt();
    for (long j = 0; j < S; ++j) {
        for (int i = 0; i <= surface.tgrid.N; ++i) {
            for (int i2 = i + 1; i2 <= surface.tgrid.N; ++i2) {
                const double gap = std::abs(surface.at(i, j) - surface.at(i2, j));
                est.holder_t = std::max(est.holder_t, gap / std::sqrt((i2 - i) * dt));
            }
        }
    }
    return est;
}

void dump_surface_csv(const ValueSurface& surface, const std::string& filename) {
    csv::Table table;
    table.header = {"t", "x_1"};
    if (surface.sgrid.dim() == 2) table.header.push_back("x_2");
    table.header.push_back("u");
    const long S = surface.sgrid.total_nodes();
    for (int i = 0; i <= surface.tgrid.N; ++i) {
        for (long j = 0; j < S; ++j) {
            const Vec x = surface.sgrid.point(j);
            std::vector<double> row{surface.tgrid.node(i)};
            for (int a = 0; a < surface.sgrid.dim(); ++a) row.push_back(x[a]);
            row.push_back(surface.at(i, j));
            table.rows.push_back(std::move(row));
        }
    }
    csv::write(table, filename);
}

ValueSurface read_surface_csv(const std::string& filename) {
    const csv::Table table = csv::read(filename);
    const int dim = static_cast<int>(table.header.size()) - 2;
    if (dim < 1 || dim > 2) throw ConfigError("read_surface_csv: unexpected column count");

    std::vector<double> times;
    std::vector<std::vector<double>> coords(dim);
    for (const auto& row : table.rows) {
        if (times.empty() || row[0] != times.back()) times.push_back(row[0]);
        for (int a = 0; a < dim; ++a) {
            auto& cs = coords[a];
            if (std::find(cs.begin(), cs.end(), row[1 + a]) == cs.end()) cs.push_back(row[1 + a]);
        }
    }
    ValueSurface surface;
    surface.tgrid = TimeGrid(times.front(), times.back(), static_cast<int>(times.size()) - 1);
    std::vector<double> lo(dim), hi(dim);
    std::vector<int> counts(dim);
    for (int a = 0; a < dim; ++a) {
        auto cs = coords[a];
        std::sort(cs.begin(), cs.end());
        lo[a] = cs.front();
        hi[a] = cs.back();
        counts[a] = static_cast<int>(cs.size());
    }
    surface.sgrid = SpaceGrid(lo, hi, counts);
    surface.u.assign(table.rows.size(), 0.0);
    const long S = surface.sgrid.total_nodes();
    if (static_cast<long>(table.rows.size()) != static_cast<long>(times.size()) * S)
        throw ConfigError("read_surface_csv: row count is not slices x nodes");
    long r = 0;
    for (int i = 0; i < static_cast<int>(times.size()); ++i)
        for (long j = 0; j < S; ++j) surface.u[static_cast<long>(i) * S + j] =
            table.rows[r++].back();
    return surface;
}

void dump_inaction_csv(const InactionMask& mask, const std::string& filename) {
    csv::Table table;
    table.header = {"t", "x_1"};
    if (mask.sgrid.dim() == 2) table.header.push_back("x_2");
    table.header.push_back("inaction");
    const long S = mask.sgrid.total_nodes();
    for (int i = 0; i <= mask.tgrid.N; ++i) {
        for (long j = 0; j < S; ++j) {
            const Vec x = mask.sgrid.point(j);
            std::vector<double> row{mask.tgrid.node(i)};
            for (int a = 0; a < mask.sgrid.dim(); ++a) row.push_back(x[a]);
            row.push_back(mask.at(i, j) ? 1.0 : 0.0);
            table.rows.push_back(std::move(row));
        }
    }
    csv::write(table, filename);
}

Report surface_metadata(const ValueSurface& surface) {
    Report r;
    r.add("t0", surface.tgrid.t0);
    r.add("T", surface.tgrid.T);
    r.add("time_steps", static_cast<double>(surface.tgrid.N));
    r.add("dt_used", surface.dt_used);
    r.add("substeps_per_step", static_cast<double>(surface.substeps_per_step));
    r.add("cfl_factor", surface.cfl_factor);
    r.add("control_points", static_cast<double>(surface.control_points));
    r.add("boundary_margin_frac", surface.boundary_margin_frac);
    for (int a = 0; a < surface.sgrid.dim(); ++a) {
        const std::string suffix = "_" + std::to_string(a + 1);
        r.add("x_min" + suffix, surface.sgrid.x_min[a]);
        r.add("x_max" + suffix, surface.sgrid.x_max[a]);
        r.add("nodes" + suffix, static_cast<double>(surface.sgrid.nodes[a]));
    }
    return r;
}

}  // namespace sincon
