#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sincon/bsde.hpp"
#include "sincon/grid.hpp"
#include "sincon/problem.hpp"
#include "sincon/report.hpp"

namespace sincon {

struct HjbOptions {
    double cfl_factor = 0.9;
    long max_substeps = 200'000'000;  // total sub-step budget across the horizon
    double boundary_margin_frac = 0.10;
    // Stop the general constraint relaxation once no node moves more than this.
    double sweep_tol = 1e-12;
};

// Discretized value function u(t, x) plus the scheme parameters that set the
// error budget of every downstream check.
struct ValueSurface {
    TimeGrid tgrid;
    SpaceGrid sgrid;
    std::vector<double> u;  // (N+1) slices, slice-major, sgrid.total_nodes() each

    double dt_used = 0.0;  // actual sub-step after CFL shrinking
    long substeps_per_step = 1;
    double cfl_factor = 0.0;
    int control_points = 0;
    double boundary_margin_frac = 0.0;

    double at(int slice, long node) const { return u[slice * sgrid.total_nodes() + node]; }
    double& at(int slice, long node) { return u[slice * sgrid.total_nodes() + node]; }

    // Multilinear interpolation in space at a stored slice.
    double interp_space(int slice, const Vec& x) const;
    // Linear in t between slices, multilinear in x.
    double interp(double t, const Vec& x) const;
    bool in_grid(const Vec& x) const;

    // Node range along each axis that survives the boundary margin.
    std::pair<int, int> interior_range(int axis) const;

    // Grid-tied tolerance used by the inaction/jump checks: 2 dx max_i K^i.
    double scheme_tol(const ProblemSpec& spec) const;
};

// Backward monotone solve of
//   min( Du^T G + K , u_t + min_v [ (1/2)Tr(sigma sigma^T D^2 u) + <Du, b>
//                                   + f(t, x, u, Du sigma, v) ] ) = 0,
//   u(T, .) = Phi,
// by operator splitting: an explicit upwind PDE step under CFL sub-stepping,
// then a componentwise-min sweep enforcing u(x) <= u(x + G h) + K h on grid
// pushes. Interior first differences are upwinded by the sign of the
// effective drift (b plus the generator's linear-in-z pull-back when the
// affine fast path is available); boundary nodes use one-sided inward
// differences with the curvature term dropped and are excluded from error
// metrics by the margin.
ValueSurface solve_hjb_vi(const ProblemSpec& spec, const TimeGrid& tgrid, const SpaceGrid& sgrid,
                          const ControlGrid& control_grid, const HjbOptions& opts = {});

// The constraint phase on one slice: componentwise min with pushed values,
// u(x) <- min(u(x), u(x + G h) + K h) over grid pushes. Idempotent: the
// second application is a no-op. n = m = 1 runs the exact directional sweep.
void enforce_gradient_constraint(std::vector<double>& slice, const ProblemSpec& spec,
                                 const SpaceGrid& sgrid, double tol = 1e-12);

struct InactionMask {
    TimeGrid tgrid;
    SpaceGrid sgrid;
    std::vector<std::uint8_t> inaction;  // aligned with surface slices, 1 = inaction
    double tol = 0.0;

    bool at(int slice, long node) const { return inaction[slice * sgrid.total_nodes() + node] != 0; }
};

// Classifies each node by the per-unit-push margin
//   min over in-grid pushes h of [u(t, x + G h) + K h - u(t, x)] / |h|_1,
// INACTION iff the margin exceeds tol (default scheme_tol). The margin is
// normalized by |h| so the classification threshold is independent of the
// smallest representable push.
InactionMask extract_inaction_region(const ValueSurface& surface, const ProblemSpec& spec,
                                     double tol = -1.0);

// Max over nodes, times and h samples of u(t,x) - u(t,x+Gh) - K h; off-node
// pushes use multilinear interpolation. Grid-aligned pushes are exactly <= 0
// after the constraint sweep.
double jump_inequality_check(const ValueSurface& surface, const ProblemSpec& spec,
                             const std::vector<Vec>& h_samples);

struct DppResidualReport {
    double u_value = 0.0;          // u(t, x0) from the surface
    double family_inf = 0.0;       // inf over the designed control family
    double family_inf_se = 0.0;    // MC error of the attaining member
    double residual = 0.0;         // family_inf - u_value
    Vec best_control;              // attaining constant control
    double best_jump = 0.0;        // attaining initial jump size (0 = none)
};

struct DppSearchConfig {
    std::vector<double> jump_sizes = {0.0};  // initial-jump candidates per column of G
};

// One-sided dynamic-programming check: the inf over constant controls in the
// grid crossed with {no jump, single initial jump} of
// G^{t,x}_{t,t+delta}[u(t+delta, X)] compared to u(t, x0). The residual must
// be >= -(MC + interpolation error), and -> 0 on problems where a constant
// control attains the min.
DppResidualReport dpp_residual(const ProblemSpec& spec, const ValueSurface& surface,
                               int t_index, int delta_steps, const Vec& x0,
                               const ControlGrid& control_grid, const DppSearchConfig& search,
                               const McConfig& mc);

struct ViscosityPointReport {
    double t = 0.0;
    Vec x;
    double constraint_branch = 0.0;  // min_i (Du G + K)_i
    double pde_branch = 0.0;         // u_t + min_v [L u + f]
    double residual = 0.0;           // min of the two branches
    bool pass = false;
};

struct ViscosityReport {
    std::vector<ViscosityPointReport> points;
    double tol = 0.0;
    bool pass = false;
};

// Finite-difference consistency of the discrete solution with the equation at
// selected interior nodes: both branches are rebuilt from centered proxies
// (u_t, Du, D^2 u) and |min(A, B)| must stay within tol.
ViscosityReport viscosity_residual_check(const ValueSurface& surface, const ProblemSpec& spec,
                                         const std::vector<std::pair<int, Vec>>& test_points,
                                         const ControlGrid& control_grid, double tol = -1.0);

struct VerificationReport {
    bool v11_inaction = false;   // paths remain where Du G + K > tol
    double v11_min_margin = 0.0;
    bool v22_flat_off = false;   // integral of (Du G + K) dxi ~ 0
    double v22_integral = 0.0;
    bool v33_hamiltonian = false;  // candidate v attains the control-grid min
    double v33_max_gap = 0.0;
    bool v44_jump_consistency = false;  // V(s,X) = V(s,X+) + K dxi at jumps
    double v44_max_gap = 0.0;
    bool v55_value_match = false;  // |V - J(candidate)| <= 3 SE + 2 dx
    double v55_gap = 0.0;
    double v55_tol = 0.0;
    double cost_value = 0.0;
    double cost_se = 0.0;
    double surface_value = 0.0;
    int paths_exited_grid = 0;
    bool pass = false;
    Report to_report() const;
};

// Monte Carlo test of the verification-theorem conditions for a candidate
// feedback pair (v(t,x), singular jump rule). An all-pass certifies, at
// estimator level, that the candidate is optimal and the surface equals the
// candidate cost.
VerificationReport verification_check(const ProblemSpec& spec, const ValueSurface& surface,
                                      const RegularControlPolicy& candidate_policy,
                                      const SingularRule& candidate_xi_rule, const Vec& x0,
                                      const ControlGrid& control_grid, const McConfig& mc);

// Closed-form value of the disconnected-control benchmark problem.
double closed_form_section4(double t, double x, double T);

struct RegularityEstimate {
    double lipschitz_x = 0.0;  // max adjacent |du| / dx
    double holder_t = 0.0;     // max |du| / sqrt(|dt|) at fixed x
};

RegularityEstimate regularity_estimate(const ValueSurface& surface);

// CSV dumps. Surface header: t,x_1[,x_2],u; mask header: t,x_1[,x_2],inaction.
// Values carry 17 significant digits and round-trip bit-exactly.
void dump_surface_csv(const ValueSurface& surface, const std::string& filename);
ValueSurface read_surface_csv(const std::string& filename);
void dump_inaction_csv(const InactionMask& mask, const std::string& filename);
Report surface_metadata(const ValueSurface& surface);

}  // namespace sincon
