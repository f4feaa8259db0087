#include "sincon/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sincon/rng.hpp"

namespace sincon {

namespace {

// Per-step least-squares fitter on a fixed design matrix. Features are built
// from standardized coordinates, so zero-variance slices (all paths at the
// same state) degrade gracefully to an intercept-only fit: the sample mean.
class StepRegression {
public:
    StepRegression(const PathBundle& bundle, int node, const RegressionBasis& basis)
        : M_(bundle.M), basis_(basis) {
        const int n = bundle.n;
        mean_.assign(n, 0.0);
        scale_.assign(n, 1.0);
        lo_.assign(n, 0.0);
        hi_.assign(n, 0.0);
        for (int a = 0; a < n; ++a) {
            double mean = 0.0;
            double lo = bundle.state(0, node, a), hi = lo;
            for (int p = 0; p < M_; ++p) {
                const double x = bundle.state(p, node, a);
                mean += x;
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            mean /= M_;
            double var = 0.0;
            for (int p = 0; p < M_; ++p) {
                const double x = bundle.state(p, node, a) - mean;
                var += x * x;
            }
            var /= M_;
            mean_[a] = mean;
            scale_[a] = var > 1e-300 ? std::sqrt(var) : 1.0;
            lo_[a] = lo;
            hi_[a] = hi;
        }
        degenerate_ = true;
        for (int a = 0; a < n; ++a)
            if (hi_[a] > lo_[a]) degenerate_ = false;

        build_exponents(n);
        const int B = width(n);
        design_.resize(M_, B);
        Vec feat(B);
        for (int p = 0; p < M_; ++p) {
            features(bundle, p, node, feat);
            design_.row(p) = feat.transpose();
        }
        Mat gram = design_.transpose() * design_ / static_cast<double>(M_);
        // Ridge on everything but the intercept keeps conditional means exact.
        reg_ = gram;
        for (int c = 1; c < B; ++c) reg_(c, c) += basis_.ridge;
        solver_.compute(reg_);
        if (solver_.info() != Eigen::Success || !solver_.isPositive()) {
            for (int c = 1; c < B; ++c) reg_(c, c) += 1e-4;
            solver_.compute(reg_);
            fallback_ = true;
        }
    }

    // Fits target and overwrites it with the fitted values.
    void fit_in_place(std::vector<double>& target) {
        if (degenerate_) {
            double mean = 0.0;
            for (double t : target) mean += t;
            mean /= M_;
            std::fill(target.begin(), target.end(), mean);
            return;
        }
        Eigen::Map<Vec> y(target.data(), M_);
        Vec rhs = design_.transpose() * y / static_cast<double>(M_);
        Vec coef = solver_.solve(rhs);
        if (!coef.allFinite()) {
            Mat heavier = reg_;
            for (int c = 1; c < heavier.cols(); ++c) heavier(c, c) += 1e-2;
            coef = heavier.ldlt().solve(rhs);
            fallback_ = true;
        }
        y = design_ * coef;
    }

    bool fallback() const { return fallback_; }

private:
    int width(int n) const {
        if (basis_.kind == RegressionBasis::Kind::PiecewiseConstant) {
            int w = 1;
            for (int a = 0; a < n; ++a) w *= basis_.partitions;
            return w;
        }
        return static_cast<int>(exponents_.size());
    }

    void build_exponents(int n) {
        if (basis_.kind == RegressionBasis::Kind::PiecewiseConstant) return;
        if (n == 1) {
            for (int i = 0; i <= basis_.degree; ++i) exponents_.push_back({i, 0});
        } else {
            for (int i = 0; i <= basis_.degree; ++i)
                for (int j = 0; i + j <= basis_.degree; ++j) exponents_.push_back({i, j});
        }
    }

    void features(const PathBundle& bundle, int p, int node, Vec& out) const {
        const int n = bundle.n;
        if (basis_.kind == RegressionBasis::Kind::PiecewiseConstant) {
            out.setZero();
            long cell = 0;
            for (int a = 0; a < n; ++a) {
                const double span = hi_[a] - lo_[a];
                int idx = 0;
                if (span > 0) {
                    idx = static_cast<int>((bundle.state(p, node, a) - lo_[a]) / span *
                                           basis_.partitions);
                    idx = std::clamp(idx, 0, basis_.partitions - 1);
                }
                cell = cell * basis_.partitions + idx;
            }
            out[cell] = 1.0;
            return;
        }
        double x0 = (bundle.state(p, node, 0) - mean_[0]) / scale_[0];
        double x1 = n > 1 ? (bundle.state(p, node, 1) - mean_[1]) / scale_[1] : 0.0;
        for (size_t b = 0; b < exponents_.size(); ++b) {
            const auto [i, j] = exponents_[b];
            out[static_cast<int>(b)] = std::pow(x0, i) * (n > 1 ? std::pow(x1, j) : 1.0);
        }
    }

    int M_;
    RegressionBasis basis_;
    std::vector<double> mean_, scale_, lo_, hi_;
    std::vector<std::pair<int, int>> exponents_;
    Mat design_;
    Mat reg_;
    Eigen::LDLT<Mat> solver_;
    bool degenerate_ = false;
    bool fallback_ = false;
};

}  // namespace

BackwardSolution solve_bsde(const ProblemSpec& spec, const PathBundle& bundle,
                            const std::vector<double>& terminal, const RegressionBasis& basis,
                            bool two_pass) {
    const int M = bundle.M;
    const int N = bundle.grid.N;
    const double dt = bundle.grid.dt();
    if (static_cast<int>(terminal.size()) != M)
        throw ContractError("solve_bsde: terminal size != path count");
    for (double v : terminal)
        if (!std::isfinite(v)) throw ContractError("solve_bsde: non-finite terminal value");
    if (bundle.n != spec.n || bundle.d != spec.d)
        throw ContractError("solve_bsde: bundle dimensions inconsistent with spec");

    BackwardSolution sol;
    sol.M = M;
    sol.N = N;
    sol.d = spec.d;
    sol.Y.assign(static_cast<long>(M) * (N + 1), 0.0);
    sol.Z.assign(static_cast<long>(M) * N * spec.d, 0.0);

    // Terminal slice copied exactly.
    for (int p = 0; p < M; ++p) sol.Y[static_cast<long>(p) * (N + 1) + N] = terminal[p];

    std::vector<double> znext(M), yhat(M), target(M);
    for (int i = N - 1; i >= 0; --i) {
        const double t = bundle.grid.node(i);
        StepRegression reg(bundle, i, basis);

        for (int a = 0; a < spec.d; ++a) {
            for (int p = 0; p < M; ++p)
                znext[p] = sol.y(p, i + 1) * bundle.brownian(p, i, a) / dt;
            reg.fit_in_place(znext);
            for (int p = 0; p < M; ++p)
                sol.Z[(static_cast<long>(p) * N + i) * spec.d + a] = znext[p];
        }

        for (int p = 0; p < M; ++p) yhat[p] = sol.y(p, i + 1);
        reg.fit_in_place(yhat);

        auto assemble = [&](const std::vector<double>& ybar) {
            for (int p = 0; p < M; ++p) {
                const Vec x = bundle.state_vec(p, i);
                const Vec v = bundle.control_at(p, i);
                RowVec z(spec.d);
                for (int a = 0; a < spec.d; ++a) z[a] = sol.z(p, i, a);
                const double gen = spec.f(t, x, ybar[p], z, v);
                const Vec dxi = bundle.xi_increment(p, i);
                target[p] = sol.y(p, i + 1) + gen * dt + spec.K.dot(dxi);
                if (!std::isfinite(target[p]))
                    throw NumericError("solve_bsde: non-finite target at step " +
                                       std::to_string(i));
            }
        };
        assemble(yhat);
        reg.fit_in_place(target);
        if (two_pass) {
            assemble(target);
            reg.fit_in_place(target);
        }
        for (int p = 0; p < M; ++p) sol.Y[static_cast<long>(p) * (N + 1) + i] = target[p];
        if (reg.fallback()) sol.ridge_fallback = true;
    }

    // Y0 estimate: cross-path mean of the telescoped pathwise cost
    //   terminal + sum_i [ f(t_i, X_i, Yfit_i, Z_i, v_i) dt + K dxi_i ].
    // The one-step target at i = 0 would hide the coefficient noise the step-1
    // regression injects identically into every path; the telescoped form
    // carries the full estimator variance, so its spread is an honest SE.
    // (Subtracting the fitted martingale Z dW would shrink the variance but
    // its in-sample hat-matrix bias grows like N * basis / M; not worth it.)
    {
        std::vector<double> pathwise(M);
        for (int p = 0; p < M; ++p) {
            double acc = terminal[p];
            for (int i = 0; i < N; ++i) {
                const double t = bundle.grid.node(i);
                const Vec x = bundle.state_vec(p, i);
                const Vec v = bundle.control_at(p, i);
                RowVec z(spec.d);
                for (int a = 0; a < spec.d; ++a) z[a] = sol.z(p, i, a);
                acc += spec.f(t, x, sol.y(p, i), z, v) * dt + spec.K.dot(bundle.xi_increment(p, i));
            }
            pathwise[p] = acc;
        }
        double mean = 0.0;
        for (double v : pathwise) mean += v;
        mean /= M;
        double var = 0.0;
        for (double v : pathwise) var += (v - mean) * (v - mean);
        var = M > 1 ? var / (M - 1) : 0.0;
        sol.y0 = mean;
        sol.y0_std_error = std::sqrt(var / M);
    }
    return sol;
}

ValueWithError backward_semigroup(const ProblemSpec& spec, double t, double t1, const Vec& x0,
                                  const RegularControlPolicy& policy,
                                  const SingularControlPath& xi, const TerminalFn& eta,
                                  const McConfig& mc) {
    if (!(t < t1) || t1 > spec.T + 1e-12)
        throw ContractError("backward_semigroup: need t < t1 <= T");
    const TimeGrid grid(t, t1, mc.steps);
    const PathBundle bundle = simulate_forward(spec, grid, x0, policy, xi, mc.M, mc.seed);
    std::vector<double> terminal(mc.M);
    for (int p = 0; p < mc.M; ++p) terminal[p] = eta(bundle.state_vec(p, grid.N));
    const BackwardSolution sol = solve_bsde(spec, bundle, terminal, mc.basis, mc.two_pass);
    return ValueWithError{sol.y0, sol.y0_std_error};
}

ValueWithError cost_functional(const ProblemSpec& spec, double t, const Vec& x0,
                               const RegularControlPolicy& policy,
                               const SingularControlPath& xi, const McConfig& mc) {
    return backward_semigroup(spec, t, spec.T, x0, policy, xi, spec.phi, mc);
}

ComparisonReport comparison_check(const ProblemSpec& spec1, const ProblemSpec& spec2,
                                  const PathBundle& bundle, const SingularControlPath& xi1,
                                  const SingularControlPath& xi2, const RegressionBasis& basis) {
    const int M = bundle.M;
    const int N = bundle.grid.N;
    const double dt = bundle.grid.dt();

    // Precondition spot checks: ordered generators on sampled arguments and
    // ordered terminals per path; ordered cumulative xi.
    const int probes = std::min(M, 256);
    for (int p = 0; p < probes; ++p) {
        const int i = static_cast<int>(rng::uniform(bundle.seed, p, 9001, 0) * N);
        const double t = bundle.grid.node(std::min(i, N - 1));
        const Vec x = bundle.state_vec(p, std::min(i, N - 1));
        const Vec v = bundle.control_at(p, std::min(i, N - 1));
        const double y = -2 + 4 * rng::uniform(bundle.seed, p, 9002, 0);
        RowVec z(bundle.d);
        for (int a = 0; a < bundle.d; ++a)
            z[a] = -2 + 4 * rng::uniform(bundle.seed, p, 9003, a);
        const double f1 = spec1.f(t, x, y, z, v);
        const double f2 = spec2.f(t, x, y, z, v);
        if (f1 < f2 - 1e-12) {
            std::ostringstream os;
            os << "comparison_check: f1 < f2 at sample t=" << t << " x=[" << x.transpose()
               << "] y=" << y;
            throw ContractError(os.str());
        }
    }
    std::vector<double> term1(M), term2(M);
    for (int p = 0; p < M; ++p) {
        const Vec xT = bundle.state_vec(p, N);
        term1[p] = spec1.phi(xT);
        term2[p] = spec2.phi(xT);
        if (term1[p] < term2[p] - 1e-12)
            throw ContractError("comparison_check: terminal1 < terminal2 on path " +
                                std::to_string(p));
    }
    Vec cum1 = Vec::Zero(xi1.m), cum2 = Vec::Zero(xi2.m);
    for (int i = 0; i < N; ++i) {
        cum1 += xi1.increment(i, dt);
        cum2 += xi2.increment(i, dt);
        if (((cum1 - cum2).array() < -1e-12).any())
            throw ContractError("comparison_check: xi1 < xi2 at step " + std::to_string(i));
    }

    PathBundle b1 = bundle;
    b1.xi = xi1;
    PathBundle b2 = bundle;
    b2.xi = xi2;
    const BackwardSolution s1 = solve_bsde(spec1, b1, term1, basis);
    const BackwardSolution s2 = solve_bsde(spec2, b2, term2, basis);

    ComparisonReport report;
    report.y1 = s1.y0;
    report.y2 = s2.y0;
    report.se1 = s1.y0_std_error;
    report.se2 = s2.y0_std_error;
    const double se = std::sqrt(report.se1 * report.se1 + report.se2 * report.se2);
    report.margin = report.y1 - report.y2 + 3.0 * se;
    report.passed = report.margin >= 0.0;
    return report;
}

}  // namespace sincon
