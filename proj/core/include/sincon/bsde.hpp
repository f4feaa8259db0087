#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sincon/sde.hpp"

namespace sincon {

// Conditional-expectation estimator for the backward sweep.
struct RegressionBasis {
    enum class Kind { Polynomial, PiecewiseConstant };
    Kind kind = Kind::Polynomial;
    int degree = 3;      // total polynomial degree (tensor basis, truncated)
    int partitions = 16; // cells per axis for the piecewise-constant kind
    double ridge = 1e-8;

    static RegressionBasis polynomial(int degree, double ridge = 1e-8) {
        return RegressionBasis{Kind::Polynomial, degree, 16, ridge};
    }
    static RegressionBasis piecewise(int partitions, double ridge = 1e-8) {
        return RegressionBasis{Kind::PiecewiseConstant, 0, partitions, ridge};
    }
};

struct BackwardSolution {
    int M = 0, N = 0, d = 1;
    std::vector<double> Y;  // M x (N+1)
    std::vector<double> Z;  // M x N x d
    double y0 = 0.0;
    double y0_std_error = 0.0;
    // Set when a singular normal-equation solve fell back to a heavier ridge.
    bool ridge_fallback = false;

    double y(int path, int node) const { return Y[static_cast<long>(path) * (N + 1) + node]; }
    double z(int path, int step, int axis) const {
        return Z[(static_cast<long>(path) * N + step) * d + axis];
    }
};

struct ValueWithError {
    double value = 0.0;
    double std_error = 0.0;
};

// Backward regression sweep for the recursive cost. Per step i:
//   Z_i  <- fit of Y_{i+1} dW_i^T / dt on basis(X_i)
//   Yhat <- fit of Y_{i+1} on basis(X_i)          (one implicit-in-y Picard pass)
//   Y_i  <- fit of [Y_{i+1} + f(t_i, X_i, Yhat, Z_i, v_i) dt + K dxi_i]
// The terminal slice is copied exactly. At nodes where all paths share the
// same state (i = 0) the regression collapses to the sample mean.
BackwardSolution solve_bsde(const ProblemSpec& spec, const PathBundle& bundle,
                            const std::vector<double>& terminal, const RegressionBasis& basis,
                            bool two_pass = false);

struct McConfig {
    int M = 20000;
    int steps = 50;
    std::uint64_t seed = 1;
    RegressionBasis basis;
    bool two_pass = false;
};

// G^{t,x;v,xi}_{t,t1}[eta(X_{t1})]: simulate forward on [t, t1], then run the
// backward sweep from terminal eta. Equals the cost functional when t1 = T
// and eta = Phi.
ValueWithError backward_semigroup(const ProblemSpec& spec, double t, double t1, const Vec& x0,
                                  const RegularControlPolicy& policy,
                                  const SingularControlPath& xi, const TerminalFn& eta,
                                  const McConfig& mc);

// J(t, x; v, xi) = Y_t with terminal Phi(X_T).
ValueWithError cost_functional(const ProblemSpec& spec, double t, const Vec& x0,
                               const RegularControlPolicy& policy,
                               const SingularControlPath& xi, const McConfig& mc);

struct ComparisonReport {
    double y1 = 0.0, y2 = 0.0;
    double se1 = 0.0, se2 = 0.0;
    double margin = 0.0;  // y1 - y2 + 3 * combined SE; >= 0 passes
    bool passed = false;
};

// Monte Carlo restatement of the BSDE comparison theorem: with f1 >= f2
// (spot-checked on sampled arguments), terminal1 >= terminal2 per path, and
// xi1 >= xi2 cumulatively, the solved Y1_0 must exceed Y2_0 up to the 3-SE
// margin. The pathwise a.s. statement is only certified at estimator level.
ComparisonReport comparison_check(const ProblemSpec& spec1, const ProblemSpec& spec2,
                                  const PathBundle& bundle, const SingularControlPath& xi1,
                                  const SingularControlPath& xi2, const RegressionBasis& basis);

}  // namespace sincon
