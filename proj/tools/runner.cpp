#include "runner.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "sincon/bsde.hpp"
#include "sincon/csv.hpp"
#include "sincon/hjb.hpp"
#include "sincon/parallel.hpp"
#include "sincon/problem.hpp"
#include "sincon/report.hpp"
#include "sincon/sde.hpp"
#include "sincon/verification.hpp"

namespace sincon::cli {

namespace {

ProblemSpec build_problem(const RunConfig& c) {
    if (c.problem == "section4") return builtin_section4(c.param_g, c.param_k, c.horizon);
    if (c.problem == "wang") return builtin_wang(c.param_a, c.param_b0, c.param_sigma0, c.param_mu);
    return builtin_linear_fk(c.param_c, c.param_g, c.param_k, c.horizon);
}

SpaceGrid build_space_grid(const RunConfig& c) {
    const int nodes = static_cast<int>(std::lround((c.x_max - c.x_min) / c.dx)) + 1;
    return SpaceGrid(c.x_min, c.x_max, nodes);
}

McConfig build_mc(const RunConfig& c) {
    McConfig mc;
    mc.M = c.mc_paths;
    mc.steps = c.mc_steps;
    mc.seed = c.seed;
    mc.basis = RegressionBasis::polynomial(c.basis_degree);
    return mc;
}

RegularControlPolicy candidate_policy(const ProblemSpec& spec) {
    if (spec.k == 0) return RegularControlPolicy::constant(Vec(0));
    // Disconnected-control benchmark: v = -1 on x > 0, v = 0 on x <= 0
    // attains the Hamiltonian minimum.
    return RegularControlPolicy::feedback([](double, const Vec& x) {
        Vec v(1);
        v[0] = x[0] > 0 ? -1.0 : 0.0;
        return v;
    });
}

std::string out_path(const RunConfig& c, const std::string& name) {
    std::filesystem::create_directories(c.output_dir);
    return (std::filesystem::path(c.output_dir) / name).string();
}

bool selected(const RunConfig& c, const std::string& check) {
    if (c.checks == "all") return true;
    std::stringstream ss(c.checks);
    std::string item;
    while (std::getline(ss, item, ','))
        if (item == check) return true;
    return false;
}

int run_solve(const RunConfig& c) {
    const ProblemSpec spec = build_problem(c);
    ProblemSpec tuned = spec;
    tuned.U.points_per_unit = c.control_points_per_unit;
    const SpaceGrid sgrid = build_space_grid(c);
    const TimeGrid tgrid(0.0, spec.T, c.time_steps);
    const ControlGrid controls = discretize_control_set(tuned.U);
    HjbOptions opts;
    opts.cfl_factor = c.cfl;

    const ValueSurface surface = solve_hjb_vi(tuned, tgrid, sgrid, controls, opts);
    dump_surface_csv(surface, out_path(c, "surface.csv"));
    const InactionMask mask = extract_inaction_region(surface, tuned);
    dump_inaction_csv(mask, out_path(c, "inaction.csv"));

    Report report;
    report.add("command", std::string("solve"));
    report.add("problem", c.problem);
    report.merge(surface_metadata(surface), "scheme");
    const RegularityEstimate reg = regularity_estimate(surface);
    report.add("regularity.lipschitz_x", reg.lipschitz_x);
    report.add("regularity.holder_t", reg.holder_t);
    report.save(out_path(c, "report.txt"));
    std::cout << report.text();
    return 0;
}

int run_simulate(const RunConfig& c) {
    const ProblemSpec spec = build_problem(c);
    const TimeGrid grid(0.0, spec.T, c.mc_steps);
    Vec x0 = Vec::Constant(spec.n, c.x0);
    Vec v(spec.k);
    if (spec.k > 0) v[0] = c.sim_control;
    SingularControlPath xi = SingularControlPath::zero(spec.m);
    if (c.jump_node >= 0)
        xi = SingularControlPath::single_jump(spec.m, c.jump_node,
                                              Vec::Constant(spec.m, c.jump_size));

    const PathBundle bundle = simulate_forward(spec, grid, x0, RegularControlPolicy::constant(v),
                                               xi, c.mc_paths, c.seed);
    dump_paths_csv(bundle, out_path(c, "paths.csv"));

    double mean = 0.0;
    for (int p = 0; p < bundle.M; ++p) mean += bundle.state(p, grid.N, 0);
    mean /= bundle.M;
    Report report;
    report.add("command", std::string("simulate"));
    report.add("problem", c.problem);
    report.add("paths", static_cast<double>(c.mc_paths));
    report.add("steps", static_cast<double>(c.mc_steps));
    report.add("seed", static_cast<double>(c.seed));
    report.add("mean_x_T", mean);
    report.save(out_path(c, "report.txt"));
    std::cout << report.text();
    return 0;
}

int run_example(const RunConfig& c) {
    const ProblemSpec spec = build_problem(c);
    const SpaceGrid sgrid = build_space_grid(c);
    const TimeGrid tgrid(0.0, spec.T, c.time_steps);
    const ControlGrid controls = discretize_control_set(spec.U);
    HjbOptions opts;
    opts.cfl_factor = c.cfl;
    const ValueSurface surface = solve_hjb_vi(spec, tgrid, sgrid, controls, opts);

    Vec x = Vec::Constant(spec.n, c.point_x);
    const double solved = surface.interp(c.point_t, x);
    Report report;
    report.add("command", std::string("example"));
    report.add("problem", c.problem);
    report.add("point_t", c.point_t);
    report.add("point_x", c.point_x);
    report.add("solved", solved);
    if (c.problem == "section4") {
        const double exact = closed_form_section4(c.point_t, c.point_x, spec.T);
        report.add("closed_form", exact);
        report.add("abs_error", std::abs(solved - exact));
    } else if (c.problem == "linear_fk") {
        const double exact = c.point_x + c.param_c * (spec.T - c.point_t);
        report.add("closed_form", exact);
        report.add("abs_error", std::abs(solved - exact));
    }
    report.save(out_path(c, "report.txt"));
    std::cout << report.text();
    return 0;
}

// Chain step from the same stability scan the PDE solver uses.
int oracle_steps(const ProblemSpec& spec, const SpaceGrid& sgrid, const ControlGrid& controls,
                 int min_steps) {
    const double dx = sgrid.dx(0);
    double worst = 0.0;
    for (long j = 0; j < sgrid.total_nodes(); ++j) {
        const Vec x = sgrid.point(j);
        for (const auto& v : controls.points) {
            const Mat sig = spec.sigma(0.0, x, v);
            const Vec b = spec.b(0.0, x, v);
            double acc = 0.0;
            for (int a = 0; a < spec.n; ++a)
                acc += (sig * sig.transpose())(a, a) / (dx * dx) + 2.0 * std::abs(b[a]) / dx;
            worst = std::max(worst, acc);
        }
    }
    return std::max(min_steps, static_cast<int>(std::ceil(spec.T * worst / 0.9)));
}

// Oracle defaults that respect the state-action budget: coarse space grid,
// sparse control grid, short jump ladder.
DPOracleConfig oracle_defaults(const ProblemSpec& spec, const RunConfig& c) {
    RunConfig coarse = c;
    coarse.dx = std::max(c.dx, 0.05);
    ProblemSpec sparse = spec;
    sparse.U.points_per_unit = std::min(c.control_points_per_unit, 5.0);
    DPOracleConfig cfg;
    cfg.sgrid = build_space_grid(coarse);
    cfg.controls = discretize_control_set(sparse.U);
    const double dxo = cfg.sgrid.dx(0);
    const double gmax = spec.G.cwiseAbs().maxCoeff();
    const double h_unit = gmax > 0 ? dxo / gmax : dxo;
    cfg.jump_sizes = {0.0, h_unit, 2 * h_unit, 5 * h_unit};
    cfg.tgrid = TimeGrid(0.0, spec.T, oracle_steps(spec, cfg.sgrid, cfg.controls, c.time_steps));
    return cfg;
}

int run_oracle(const RunConfig& c) {
    const ProblemSpec spec = build_problem(c);
    const DPOracleConfig cfg = oracle_defaults(spec, c);
    const ValueSurface oracle = dp_oracle(spec, cfg);
    dump_surface_csv(oracle, out_path(c, "oracle_surface.csv"));
    Report report;
    report.add("command", std::string("oracle"));
    report.add("problem", c.problem);
    report.merge(surface_metadata(oracle), "oracle");
    report.save(out_path(c, "report.txt"));
    std::cout << report.text();
    return 0;
}

int run_check(const RunConfig& c) {
    const ProblemSpec spec = build_problem(c);
    ProblemSpec tuned = spec;
    tuned.U.points_per_unit = c.control_points_per_unit;
    const SpaceGrid sgrid = build_space_grid(c);
    const TimeGrid tgrid(0.0, spec.T, c.time_steps);
    const ControlGrid controls = discretize_control_set(tuned.U);
    HjbOptions opts;
    opts.cfl_factor = c.cfl;
    const ValueSurface surface = solve_hjb_vi(tuned, tgrid, sgrid, controls, opts);
    const McConfig mc = build_mc(c);
    const double tol = surface.scheme_tol(tuned);

    Report report;
    report.add("command", std::string("check"));
    report.add("problem", c.problem);
    bool all_pass = true;
    auto record = [&](const std::string& name, bool pass) {
        report.add("check." + name + ".pass", pass);
        all_pass = all_pass && pass;
    };

    if (selected(c, "jump")) {
        std::vector<Vec> h_samples;
        for (double h : {0.1, 0.5, 1.0}) h_samples.push_back(Vec::Constant(spec.m, h));
        const double violation = jump_inequality_check(surface, tuned, h_samples);
        report.add("check.jump.max_violation", violation);
        report.add("check.jump.tol", tol);
        // Grid-aligned pushes are exact after the sweep.
        double aligned = -1e300;
        if (spec.n == 1 && spec.m == 1 && spec.G(0, 0) > 0) {
            const double step_cost = spec.K[0] * sgrid.dx(0) / spec.G(0, 0);
            for (int i = 0; i <= tgrid.N; ++i)
                for (long j = 0; j + 1 < sgrid.total_nodes(); ++j)
                    aligned = std::max(aligned,
                                       surface.at(i, j) - surface.at(i, j + 1) - step_cost);
            report.add("check.jump.grid_aligned_max", aligned);
        }
        record("jump", violation <= tol && aligned <= 0.0);
    }
    if (selected(c, "inaction")) {
        const InactionMask mask = extract_inaction_region(surface, tuned);
        long inaction = 0, total = 0;
        for (auto b : mask.inaction) {
            inaction += b;
            ++total;
        }
        report.add("check.inaction.fraction", static_cast<double>(inaction) / total);
        record("inaction", true);  // informative; no pass criterion by itself
    }
    if (selected(c, "viscosity")) {
        std::vector<std::pair<int, Vec>> points;
        const auto [lo, hi] = surface.interior_range(0);
        for (int q = 1; q <= 5; ++q) {
            const int j = lo + q * (hi - lo) / 6;
            points.emplace_back(tgrid.N / 2, Vec::Constant(1, sgrid.coord(0, j)));
        }
        const ViscosityReport visc = viscosity_residual_check(surface, tuned, points, controls);
        report.add("check.viscosity.tol", visc.tol);
        for (size_t i = 0; i < visc.points.size(); ++i)
            report.add("check.viscosity.residual_" + std::to_string(i), visc.points[i].residual);
        record("viscosity", visc.pass);
    }
    if (selected(c, "dpp")) {
        DppSearchConfig search;
        const double dxg = sgrid.dx(0) / std::abs(spec.G(0, 0));
        search.jump_sizes = {0.0, dxg, 5 * dxg};
        const int delta_steps = std::max(1, tgrid.N / 10);
        McConfig dpp_mc = mc;
        dpp_mc.M = std::min(mc.M, 5000);
        const DppResidualReport dpp =
            dpp_residual(tuned, surface, 0, delta_steps, Vec::Constant(1, c.point_x), controls,
                         search, dpp_mc);
        report.add("check.dpp.residual", dpp.residual);
        const double dpp_tol = 3.0 * dpp.family_inf_se + tol;
        report.add("check.dpp.tol", dpp_tol);
        record("dpp", std::abs(dpp.residual) <= dpp_tol);
    }
    if (selected(c, "regularity")) {
        const RegularityEstimate reg = regularity_estimate(surface);
        report.add("check.regularity.lipschitz_x", reg.lipschitz_x);
        report.add("check.regularity.holder_t", reg.holder_t);
        bool pass = std::isfinite(reg.lipschitz_x) && std::isfinite(reg.holder_t);
        if (c.problem == "section4")
            pass = pass && reg.lipschitz_x <= std::exp(spec.T) + 0.05;
        record("regularity", pass);
    }
    if (selected(c, "verification")) {
        // jump_node/jump_size inject a singular jump into the candidate rule;
        // inside the inaction region that must trip v22/v44.
        const double jump_at =
            c.jump_node >= 0 ? tgrid.node(std::min(c.jump_node, tgrid.N)) : -1.0;
        const SingularRule rule = [m = spec.m, jump_at, size = c.jump_size,
                                   dt = spec.T / c.mc_steps](double t, const Vec&) {
            if (jump_at >= 0 && std::abs(t - jump_at) < 0.5 * dt)
                return Vec(Vec::Constant(m, size));
            return Vec(Vec::Zero(m));
        };
        McConfig vmc = mc;
        vmc.M = std::min(mc.M, 4000);
        const VerificationReport ver =
            verification_check(tuned, surface, candidate_policy(tuned), rule,
                               Vec::Constant(spec.n, c.point_x), controls, vmc);
        report.merge(ver.to_report(), "check.verification.detail");
        record("verification", ver.pass);
    }
    if (selected(c, "crosscheck")) {
        const DPOracleConfig cfg = oracle_defaults(spec, c);
        const ValueSurface oracle = dp_oracle(spec, cfg);
        std::vector<std::pair<double, Vec>> points = {
            {0.0, Vec::Constant(1, c.point_x)},
            {0.0, Vec::Constant(1, -c.point_x)},
        };
        McConfig cmc = mc;
        cmc.M = std::min(mc.M, 20000);
        const CrossCheckReport cross =
            cross_check(tuned, points, surface, oracle, candidate_policy(tuned),
                        SingularControlPath::zero(spec.m), cmc, -1.0, 5e-2);
        report.merge(cross.to_report(), "check.crosscheck.detail");
        record("crosscheck", cross.pass);
    }

    report.add("all_checks_pass", all_pass);
    report.save(out_path(c, "report.txt"));
    std::cout << report.text();
    return all_pass ? 0 : 2;
}

}  // namespace

int run(const RunConfig& config) {
    set_max_threads(config.threads);
    switch (config.command) {
        case Command::Solve: return run_solve(config);
        case Command::Simulate: return run_simulate(config);
        case Command::Check: return run_check(config);
        case Command::Example: return run_example(config);
        case Command::Oracle: return run_oracle(config);
    }
    return 1;
}

}  // namespace sincon::cli
