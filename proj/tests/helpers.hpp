#pragma once

#include <random>
#include <vector>

#include "entot/grid.hpp"
#include "entot/simplex.hpp"

// Seeded generators for the property suites; the shipped binaries stay free
// of randomness.

namespace testutil {

inline std::mt19937& rng(uint32_t seed = 0) {
    static std::mt19937 g(12345u);
    if (seed) g.seed(seed);
    return g;
}

inline double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng());
}

inline entot::SimplexPoint random_simplex_point(int n) {
    std::vector<double> p(n);
    for (double& x : p) x = uniform(0.05, 1.0);
    return entot::SimplexPoint(std::move(p));
}

// strictly positive masses summing to one
inline std::vector<double> random_masses(size_t n) {
    std::vector<double> m(n);
    double s = 0.0;
    for (double& x : m) {
        x = uniform(0.1, 1.0);
        s += x;
    }
    for (double& x : m) x /= s;
    return m;
}

inline std::vector<entot::Point> random_sorted_nodes(size_t n, double lo, double hi) {
    std::vector<double> xs(n);
    for (double& x : xs) x = uniform(lo, hi);
    std::sort(xs.begin(), xs.end());
    std::vector<entot::Point> nodes(n);
    for (size_t i = 0; i < n; ++i) nodes[i] = {xs[i], 0.0};
    return nodes;
}

} // namespace testutil
