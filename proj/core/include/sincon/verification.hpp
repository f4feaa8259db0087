#pragma once

#include <cstdint>
#include <vector>

#include "sincon/hjb.hpp"

namespace sincon {

// Brute-force dynamic-programming oracle on a locally consistent controlled
// Markov chain. Independent route against solve_hjb_vi for all derived
// expected values.
struct DPOracleConfig {
    TimeGrid tgrid;   // chain step = tgrid.dt(); no sub-stepping here
    SpaceGrid sgrid;
    ControlGrid controls;
    std::vector<double> jump_sizes;  // per-column jump grid; empty = {0, dx/|G|, ..., 10 dx/|G|}
    long max_table = 10'000'000;     // slices x nodes x actions budget
};

// Per slice, per node: value = min( jump branch, diffusion branch ) with
//   diffusion branch: min_v [ sum p(x -> x') u_next(x') + f(t, x, u_next, z_fd, v) dt ]
//   jump branch:      min over the jump grid of [ K h + value(t, x + G h) ]
// iterated within the slice to its fixed point. Transition probabilities are
// the upwinded local-consistency ones; an invalid interior probability is a
// configuration error demanding a coarser dt.
ValueSurface dp_oracle(const ProblemSpec& spec, const DPOracleConfig& cfg);

struct CrossCheckPoint {
    double t = 0.0;
    Vec x;
    double pde = 0.0;
    double oracle = 0.0;
    double mc = 0.0;
    double mc_se = 0.0;
    double pde_vs_oracle = 0.0;
    double mc_vs_pde = 0.0;
    bool pass_oracle = false;
    bool pass_mc = false;
};

struct CrossCheckReport {
    std::vector<CrossCheckPoint> points;
    double tol_pde = 0.0;
    double tol_oracle = 0.0;
    bool pass = false;
    Report to_report() const;
};

// Three-way agreement at selected points: PDE surface vs DP oracle within
// tol_pde + tol_oracle, and the candidate-control Monte Carlo cost vs PDE
// within 3 SE + tol_pde.
CrossCheckReport cross_check(const ProblemSpec& spec, const std::vector<std::pair<double, Vec>>& points,
                             const ValueSurface& pde_surface, const ValueSurface& oracle_surface,
                             const RegularControlPolicy& candidate_policy,
                             const SingularControlPath& candidate_xi, const McConfig& mc,
                             double tol_pde = -1.0, double tol_oracle = -1.0);

struct BatteryConfig {
    Vec x0;                        // base state for the perturbation study
    Vec v_base;                    // base constant control (must lie in U)
    Vec v_direction;               // perturbation direction; v_base + delta*dir stays in U
    std::vector<double> deltas = {0.2, 0.1, 0.05};
    std::vector<double> x0_scales = {0.5, 1.0, 2.0};  // scales of x0 for growth ratios
    McConfig mc;
    int seed_blocks = 8;  // independent blocks for difference standard errors
};

struct EstimateBatteryReport {
    // Control-perturbation stability: C(delta) = |Y0(v+delta dir) - Y0(v)| / delta.
    std::vector<double> deltas;
    std::vector<double> c_hat;
    std::vector<double> c_hat_se;
    bool c_finite = false;
    bool c_monotone = false;  // nonincreasing as delta shrinks, within 3 SE slack

    // Backward growth: [ sup_s |Y_s|^2 + int |Z|^2 ] / (1 + |x|^2) per scale.
    std::vector<double> yz_growth_ratio;
    double yz_growth_max = 0.0;

    // Frozen-state vs moving-state window BSDEs: fitted log-log slope of
    // |Y1 - Y2| against the window size.
    std::vector<double> window_gap;
    double state4_slope = 0.0;

    Report to_report() const;
};

EstimateBatteryReport estimate_battery(const ProblemSpec& spec, const BatteryConfig& cfg);

}  // namespace sincon
