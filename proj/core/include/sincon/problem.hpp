#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sincon/types.hpp"

namespace sincon {

// Axis-aligned box in control space; the compact set U is a finite union of
// these. k = 0 (no regular control) is represented by a single empty box.
struct ControlBox {
    Vec lo;
    Vec hi;
};

struct ControlSet {
    std::vector<ControlBox> boxes;
    // Grid density used when discretizing U: points per unit of axis length.
    double points_per_unit = 41.0;

    int dim() const { return boxes.empty() ? 0 : static_cast<int>(boxes.front().lo.size()); }
    bool contains(const Vec& v, double tol = 1e-12) const;
    void validate() const;

    static ControlSet singleton();         // k = 0
    static ControlSet interval(double lo, double hi);
};

// Finite discretization of U over which pointwise minimization runs.
struct ControlGrid {
    std::vector<Vec> points;  // deduplicated, each inside U

    int size() const { return static_cast<int>(points.size()); }
};

ControlGrid discretize_control_set(const ControlSet& set);

// Affine-in-(y,z) decomposition of the generator at fixed (t, x, v):
//   f(t, x, y, z, v) = a0 + ay * y + az . z
// Solvers fold the az-term into an effective drift, which keeps the grid
// sweep monotone and avoids per-node callable dispatch in hot loops.
struct GeneratorAffine {
    double a0 = 0.0;
    double ay = 0.0;
    RowVec az;  // length d
};

using DriftFn = std::function<Vec(double t, const Vec& x, const Vec& v)>;
using DiffusionFn = std::function<Mat(double t, const Vec& x, const Vec& v)>;
using GeneratorFn =
    std::function<double(double t, const Vec& x, double y, const RowVec& z, const Vec& v)>;
using TerminalFn = std::function<double(const Vec& x)>;
using GeneratorAffineFn = std::function<GeneratorAffine(double t, const Vec& x, const Vec& v)>;

// The full control problem: forward coefficients (b, sigma), recursive-cost
// generator f and terminal Phi, the singular-control matrices G (state push)
// and K (cost rate), the compact regular-control set U, and the horizon T.
struct ProblemSpec {
    int n = 1;  // state dimension
    int d = 1;  // Brownian dimension
    int k = 0;  // regular-control dimension
    int m = 1;  // singular-control dimension
    double T = 1.0;

    DriftFn b;
    DiffusionFn sigma;
    GeneratorFn f;
    TerminalFn phi;

    Mat G;     // n x m, constant
    RowVec K;  // 1 x m, constant, strictly positive entries

    ControlSet U;

    // Optional fast path; must agree with f (tests probe consistency).
    GeneratorAffineFn f_affine;
    // Coefficients independent of t: tables may be precomputed once.
    bool autonomous = false;

    // Box used when sampling assumptions and scaling tests.
    Vec sample_lo, sample_hi;

    std::string name = "custom";

    void validate_structure() const;  // dimension/shape checks, throws ContractError
};

struct AssumptionReport {
    // Max sampled difference quotients |g(p) - g(p')| / (|x-x'| + |v-v'| + ...).
    std::map<std::string, double> lipschitz_estimates;  // keys: b, sigma, f, phi
    // Max sampled |g| / (1 + |x|).
    std::map<std::string, double> growth_estimates;  // keys: b, sigma
    double k_min = 0.0;
    std::map<std::string, bool> passed;  // keys: A1, A2, A3
    bool all_passed() const;
};

// Samples `sample_count` tuples (t, x, x', v, v') from the problem's sample box
// and estimates Lipschitz/growth constants. A3 is checked exactly on K.
// Deterministic for a fixed rng_seed.
AssumptionReport validate_problem(const ProblemSpec& spec, int sample_count,
                                  std::uint64_t rng_seed);

// Controlled geometric problem with disconnected U = [-1,0] u [1,2]:
//   dX = (X + Xv) ds + Xv dW + G dxi,   dY = -(-Zv) ds + Z dW - K dxi,
//   Y_T = X_T.
// Closed-form value: e^{t-T} x for x > 0, e^{T-t} x for x <= 0 (G = K = 1).
ProblemSpec builtin_section4(double G = 1.0, double K = 1.0, double T = 1.0);

// Linear state, constant diffusion, generator mu*z, zero terminal, unit G,K:
//   dX = (a x + b0) ds + sigma0 dW + dxi.
ProblemSpec builtin_wang(double a, double b0, double sigma0, double mu);

// Feynman-Kac sanity problem: b = 0, sigma = 1, f = c, Phi(x) = x.
// Exact value x + c(T - t) while the gradient constraint stays slack
// (G0 + K0 >= 0).
ProblemSpec builtin_linear_fk(double c, double G0 = 1.0, double K0 = 1.0, double T = 1.0);

}  // namespace sincon
