#include "sincon/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sincon/rng.hpp"

namespace sincon {

namespace {

std::string describe_point(double t, const Vec& x, const Vec& v) {
    std::ostringstream os;
    os << "t=" << t << " x=[" << x.transpose() << "]";
    if (v.size() > 0) os << " v=[" << v.transpose() << "]";
    return os.str();
}

void require_finite(double value, const std::string& field, double t, const Vec& x,
                    const Vec& v) {
    if (!std::isfinite(value))
        throw NumericError("validate_problem: non-finite " + field + " at sample " +
                           describe_point(t, x, v));
}

}  // namespace

bool ControlSet::contains(const Vec& v, double tol) const {
    if (boxes.empty()) return v.size() == 0;
    for (const auto& box : boxes) {
        if (v.size() != box.lo.size()) return false;
        bool inside = true;
        for (int a = 0; a < v.size(); ++a) {
            if (v[a] < box.lo[a] - tol || v[a] > box.hi[a] + tol) {
                inside = false;
                break;
            }
        }
        if (inside) return true;
    }
    return false;
}

void ControlSet::validate() const {
    if (boxes.empty()) throw ContractError("ControlSet: U must be nonempty");
    const auto k = boxes.front().lo.size();
    for (const auto& box : boxes) {
        if (box.lo.size() != k || box.hi.size() != k)
            throw ContractError("ControlSet: inconsistent box dimensions");
        for (int a = 0; a < k; ++a) {
            if (!std::isfinite(box.lo[a]) || !std::isfinite(box.hi[a]))
                throw ContractError("ControlSet: U must be bounded");
            if (box.lo[a] > box.hi[a])
                throw ContractError("ControlSet: box with lo > hi");
        }
    }
    if (!(points_per_unit > 0)) throw ContractError("ControlSet: points_per_unit must be > 0");
}

ControlSet ControlSet::singleton() {
    ControlSet set;
    set.boxes.push_back(ControlBox{Vec(0), Vec(0)});
    return set;
}

ControlSet ControlSet::interval(double lo, double hi) {
    ControlSet set;
    Vec l(1), h(1);
    l[0] = lo;
    h[0] = hi;
    set.boxes.push_back(ControlBox{l, h});
    return set;
}

ControlGrid discretize_control_set(const ControlSet& set) {
    set.validate();
    const int k = set.dim();
    std::vector<Vec> points;
    for (const auto& box : set.boxes) {
        // Per-axis counts: points_per_unit per unit length, endpoints included.
        std::vector<int> counts(k);
        for (int a = 0; a < k; ++a) {
            const double len = box.hi[a] - box.lo[a];
            counts[a] = len == 0.0
                            ? 1
                            : std::max(2, static_cast<int>(std::lround(set.points_per_unit * len)));
        }
        long total = 1;
        for (int c : counts) total *= c;
        for (long flat = 0; flat < total; ++flat) {
            Vec p(k);
            long rem = flat;
            for (int a = k - 1; a >= 0; --a) {
                const int idx = static_cast<int>(rem % counts[a]);
                rem /= counts[a];
                p[a] = counts[a] == 1
                           ? box.lo[a]
                           : box.lo[a] + (box.hi[a] - box.lo[a]) * idx / (counts[a] - 1);
            }
            points.push_back(std::move(p));
        }
        if (k == 0) points.push_back(Vec(0));
    }
    std::sort(points.begin(), points.end(), [](const Vec& a, const Vec& b) {
        for (int i = 0; i < a.size(); ++i) {
            if (a[i] != b[i]) return a[i] < b[i];
        }
        return false;
    });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const Vec& a, const Vec& b) { return a == b; }),
                 points.end());
    if (points.empty()) points.push_back(Vec(0));
    return ControlGrid{std::move(points)};
}

void ProblemSpec::validate_structure() const {
    if (n < 1 || n > 2) throw ContractError("ProblemSpec.n: state dimension must be 1 or 2");
    if (d < 1) throw ContractError("ProblemSpec.d: Brownian dimension must be >= 1");
    if (k < 0) throw ContractError("ProblemSpec.k: control dimension must be >= 0");
    if (m < 1) throw ContractError("ProblemSpec.m: singular dimension must be >= 1");
    if (!(T > 0) || !std::isfinite(T)) throw ContractError("ProblemSpec.T: horizon must be positive");
    if (!b) throw ContractError("ProblemSpec.b: missing drift");
    if (!sigma) throw ContractError("ProblemSpec.sigma: missing diffusion");
    if (!f) throw ContractError("ProblemSpec.f: missing generator");
    if (!phi) throw ContractError("ProblemSpec.phi: missing terminal map");
    if (G.rows() != n || G.cols() != m)
        throw ContractError("ProblemSpec.G: expected " + std::to_string(n) + "x" +
                            std::to_string(m) + " matrix");
    if (K.size() != m)
        throw ContractError("ProblemSpec.K: expected 1x" + std::to_string(m) + " row vector");
    U.validate();
    if (U.dim() != k)
        throw ContractError("ProblemSpec.U: control set dimension != k");
    if (sample_lo.size() != n || sample_hi.size() != n)
        throw ContractError("ProblemSpec.sample_lo/sample_hi: expected length n");

    // Probe output shapes once at the sample-box center.
    const Vec x = 0.5 * (sample_lo + sample_hi);
    Vec v(k);
    if (k > 0) {
        v = 0.5 * (U.boxes.front().lo + U.boxes.front().hi);
    }
    const Vec bv = b(0.0, x, v);
    if (bv.size() != n) throw ContractError("ProblemSpec.b: output length != n");
    const Mat sv = sigma(0.0, x, v);
    if (sv.rows() != n || sv.cols() != d)
        throw ContractError("ProblemSpec.sigma: output is not n x d");
    RowVec z = RowVec::Zero(d);
    (void)f(0.0, x, 0.0, z, v);
    (void)phi(x);
}

bool AssumptionReport::all_passed() const {
    for (const auto& [key, ok] : passed) {
        if (!ok) return false;
    }
    return !passed.empty();
}

AssumptionReport validate_problem(const ProblemSpec& spec, int sample_count,
                                  std::uint64_t rng_seed) {
    if (sample_count < 1) throw ContractError("validate_problem: sample_count must be >= 1");
    spec.validate_structure();

    AssumptionReport report;
    report.k_min = spec.K.minCoeff();

    auto sample_x = [&](std::uint64_t s, std::uint64_t salt) {
        Vec x(spec.n);
        for (int a = 0; a < spec.n; ++a) {
            const double u = rng::uniform(rng_seed, s, salt, a);
            x[a] = spec.sample_lo[a] + u * (spec.sample_hi[a] - spec.sample_lo[a]);
        }
        return x;
    };
    auto sample_v = [&](std::uint64_t s, std::uint64_t salt) {
        if (spec.k == 0) return Vec(0);
        const auto& boxes = spec.U.boxes;
        const auto pick =
            static_cast<size_t>(rng::uniform(rng_seed, s, salt, 100) * boxes.size());
        const auto& box = boxes[std::min(pick, boxes.size() - 1)];
        Vec v(spec.k);
        for (int a = 0; a < spec.k; ++a) {
            const double u = rng::uniform(rng_seed, s, salt, 200 + a);
            v[a] = box.lo[a] + u * (box.hi[a] - box.lo[a]);
        }
        return v;
    };

    double lip_b = 0, lip_sigma = 0, lip_f = 0, lip_phi = 0;
    double growth_b = 0, growth_sigma = 0;

    for (int s = 0; s < sample_count; ++s) {
        const double t = spec.T * rng::uniform(rng_seed, s, 0, 0);
        const Vec x1 = sample_x(s, 1), x2 = sample_x(s, 2);
        const Vec v1 = sample_v(s, 3), v2 = sample_v(s, 4);
        const double y1 = -2 + 4 * rng::uniform(rng_seed, s, 5, 0);
        const double y2 = -2 + 4 * rng::uniform(rng_seed, s, 6, 0);
        RowVec z1(spec.d), z2(spec.d);
        for (int a = 0; a < spec.d; ++a) {
            z1[a] = -2 + 4 * rng::uniform(rng_seed, s, 7, a);
            z2[a] = -2 + 4 * rng::uniform(rng_seed, s, 8, a);
        }

        const Vec b1 = spec.b(t, x1, v1), b2 = spec.b(t, x2, v2);
        const Mat s1 = spec.sigma(t, x1, v1), s2 = spec.sigma(t, x2, v2);
        const double f1 = spec.f(t, x1, y1, z1, v1), f2 = spec.f(t, x2, y2, z2, v2);
        const double p1 = spec.phi(x1), p2 = spec.phi(x2);

        require_finite(b1.norm(), "b", t, x1, v1);
        require_finite(s1.norm(), "sigma", t, x1, v1);
        require_finite(f1, "f", t, x1, v1);
        require_finite(p1, "Phi", t, x1, v1);

        const double dxv = (x1 - x2).norm() + (v1 - v2).norm();
        const double dall = dxv + std::abs(y1 - y2) + (z1 - z2).norm();
        if (dxv > 1e-9) {
            lip_b = std::max(lip_b, (b1 - b2).norm() / dxv);
            lip_sigma = std::max(lip_sigma, (s1 - s2).norm() / dxv);
        }
        if (dall > 1e-9) lip_f = std::max(lip_f, std::abs(f1 - f2) / dall);
        if ((x1 - x2).norm() > 1e-9)
            lip_phi = std::max(lip_phi, std::abs(p1 - p2) / (x1 - x2).norm());

        growth_b = std::max(growth_b, b1.norm() / (1.0 + x1.norm()));
        growth_sigma = std::max(growth_sigma, s1.norm() / (1.0 + x1.norm()));
    }

    report.lipschitz_estimates = {{"b", lip_b}, {"sigma", lip_sigma}, {"f", lip_f}, {"phi", lip_phi}};
    report.growth_estimates = {{"b", growth_b}, {"sigma", growth_sigma}};

    auto finite = [](double e) { return std::isfinite(e); };
    report.passed["A1"] = finite(lip_b) && finite(lip_sigma) && finite(growth_b) && finite(growth_sigma);
    report.passed["A2"] = finite(lip_f) && finite(lip_phi);
    report.passed["A3"] = report.k_min > 0.0;
    return report;
}

ProblemSpec builtin_section4(double G, double K, double T) {
    if (!(G > 0)) throw ContractError("builtin_section4: G must be > 0");
    if (!(K > 0)) throw ContractError("builtin_section4: K must be > 0");
    ProblemSpec spec;
    spec.name = "section4";
    spec.n = spec.d = spec.m = 1;
    spec.k = 1;
    spec.T = T;
    spec.b = [](double, const Vec& x, const Vec& v) {
        Vec out(1);
        out[0] = x[0] + x[0] * v[0];
        return out;
    };
    spec.sigma = [](double, const Vec& x, const Vec& v) {
        Mat out(1, 1);
        out(0, 0) = x[0] * v[0];
        return out;
    };
    spec.f = [](double, const Vec&, double, const RowVec& z, const Vec& v) {
        return -z[0] * v[0];
    };
    spec.f_affine = [](double, const Vec&, const Vec& v) {
        GeneratorAffine a;
        a.az = RowVec(1);
        a.az[0] = -v[0];
        return a;
    };
    spec.phi = [](const Vec& x) { return x[0]; };
    spec.G = Mat::Constant(1, 1, G);
    spec.K = RowVec::Constant(1, K);
    spec.U.boxes = {ControlBox{Vec::Constant(1, -1.0), Vec::Constant(1, 0.0)},
                    ControlBox{Vec::Constant(1, 1.0), Vec::Constant(1, 2.0)}};
    spec.autonomous = true;
    spec.sample_lo = Vec::Constant(1, -2.0);
    spec.sample_hi = Vec::Constant(1, 2.0);
    return spec;
}

ProblemSpec builtin_wang(double a, double b0, double sigma0, double mu) {
    if (!(sigma0 > 0)) throw ContractError("builtin_wang: sigma0 must be > 0");
    ProblemSpec spec;
    spec.name = "wang";
    spec.n = spec.d = spec.m = 1;
    spec.k = 0;
    spec.T = 1.0;
    spec.b = [a, b0](double, const Vec& x, const Vec&) {
        Vec out(1);
        out[0] = a * x[0] + b0;
        return out;
    };
    spec.sigma = [sigma0](double, const Vec&, const Vec&) {
        return Mat::Constant(1, 1, sigma0);
    };
    spec.f = [mu](double, const Vec&, double, const RowVec& z, const Vec&) { return mu * z[0]; };
    spec.f_affine = [mu](double, const Vec&, const Vec&) {
        GeneratorAffine g;
        g.az = RowVec::Constant(1, mu);
        return g;
    };
    spec.phi = [](const Vec&) { return 0.0; };
    spec.G = Mat::Constant(1, 1, 1.0);
    spec.K = RowVec::Constant(1, 1.0);
    spec.U = ControlSet::singleton();
    spec.autonomous = true;
    spec.sample_lo = Vec::Constant(1, -2.0);
    spec.sample_hi = Vec::Constant(1, 2.0);
    return spec;
}

ProblemSpec builtin_linear_fk(double c, double G0, double K0, double T) {
    if (!(K0 > 0)) throw ContractError("builtin_linear_fk: K0 must be > 0");
    ProblemSpec spec;
    spec.name = "linear_fk";
    spec.n = spec.d = spec.m = 1;
    spec.k = 0;
    spec.T = T;
    spec.b = [](double, const Vec&, const Vec&) { return Vec::Zero(1); };
    spec.sigma = [](double, const Vec&, const Vec&) { return Mat::Constant(1, 1, 1.0); };
    spec.f = [c](double, const Vec&, double, const RowVec&, const Vec&) { return c; };
    spec.f_affine = [c](double, const Vec&, const Vec&) {
        GeneratorAffine g;
        g.a0 = c;
        g.az = RowVec::Zero(1);
        return g;
    };
    spec.phi = [](const Vec& x) { return x[0]; };
    spec.G = Mat::Constant(1, 1, G0);
    spec.K = RowVec::Constant(1, K0);
    spec.U = ControlSet::singleton();
    spec.autonomous = true;
    spec.sample_lo = Vec::Constant(1, -2.0);
    spec.sample_hi = Vec::Constant(1, 2.0);
    return spec;
}

}  // namespace sincon
