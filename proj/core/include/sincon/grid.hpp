#pragma once

#include <vector>

#include "sincon/types.hpp"

namespace sincon {

// Uniform time grid on [t0, T] with N steps.
struct TimeGrid {
    double t0 = 0.0;
    double T = 1.0;
    int N = 1;

    TimeGrid() = default;
    TimeGrid(double t0_, double T_, int N_) : t0(t0_), T(T_), N(N_) { validate(); }

    double dt() const { return (T - t0) / N; }
    double node(int i) const { return t0 + i * dt(); }

    void validate() const {
        if (!(t0 < T)) throw ContractError("TimeGrid: t0 must be < T");
        if (N < 1) throw ContractError("TimeGrid: N must be >= 1");
    }
};

// Uniform rectangular space grid, n <= 2 dimensions (n = 1 is the primary case).
struct SpaceGrid {
    std::vector<double> x_min;
    std::vector<double> x_max;
    std::vector<int> nodes;  // per-dimension node count, >= 3

    SpaceGrid() = default;
    SpaceGrid(double lo, double hi, int count)
        : x_min{lo}, x_max{hi}, nodes{count} {
        validate();
    }
    SpaceGrid(std::vector<double> lo, std::vector<double> hi, std::vector<int> count)
        : x_min(std::move(lo)), x_max(std::move(hi)), nodes(std::move(count)) {
        validate();
    }

    int dim() const { return static_cast<int>(nodes.size()); }
    double dx(int axis) const {
        return (x_max[axis] - x_min[axis]) / (nodes[axis] - 1);
    }
    double coord(int axis, int j) const { return x_min[axis] + j * dx(axis); }
    long total_nodes() const {
        long total = 1;
        for (int c : nodes) total *= c;
        return total;
    }

    // Flattened row-major index, axis 0 slowest.
    long flat(const std::vector<int>& idx) const {
        long f = 0;
        for (int a = 0; a < dim(); ++a) f = f * nodes[a] + idx[a];
        return f;
    }
    std::vector<int> unflat(long f) const {
        std::vector<int> idx(dim());
        for (int a = dim() - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(f % nodes[a]);
            f /= nodes[a];
        }
        return idx;
    }
    Vec point(long f) const {
        const auto idx = unflat(f);
        Vec x(dim());
        for (int a = 0; a < dim(); ++a) x[a] = coord(a, idx[a]);
        return x;
    }

    void validate() const {
        if (nodes.empty() || nodes.size() > 2)
            throw ContractError("SpaceGrid: dimension must be 1 or 2");
        if (x_min.size() != nodes.size() || x_max.size() != nodes.size())
            throw ContractError("SpaceGrid: x_min/x_max/nodes size mismatch");
        for (size_t a = 0; a < nodes.size(); ++a) {
            if (!(x_min[a] < x_max[a]))
                throw ContractError("SpaceGrid: x_min must be < x_max");
            if (nodes[a] < 3) throw ContractError("SpaceGrid: need >= 3 nodes per dimension");
        }
    }
};

}  // namespace sincon
