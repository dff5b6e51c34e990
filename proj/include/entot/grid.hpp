#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

// Discretized compactly supported densities on R^d (d = 1, 2), midpoint-rule
// quadrature, entropies and relative entropies.

namespace entot {

using Point = std::array<double, 2>; // second coordinate unused when dim == 1

struct Box {
    int dim = 1;
    Point lo{0.0, 0.0};
    Point hi{1.0, 0.0};

    double length(int axis) const { return hi[axis] - lo[axis]; }

    double diameter() const {
        double s = 0.0;
        for (int k = 0; k < dim; ++k) s += length(k) * length(k);
        return std::sqrt(s);
    }

    bool contains(const Point& p, double slack = 0.0) const {
        for (int k = 0; k < dim; ++k)
            if (p[k] < lo[k] - slack || p[k] > hi[k] + slack) return false;
        return true;
    }

    static Box interval(double a, double b) { return Box{1, {a, 0.0}, {b, 0.0}}; }
    static Box rect(double ax, double bx, double ay, double by) {
        return Box{2, {ax, ay}, {bx, by}};
    }
};

// Smallest box containing both arguments (they must share dim).
inline Box box_union(const Box& a, const Box& b) {
    Box u = a;
    for (int k = 0; k < a.dim; ++k) {
        u.lo[k] = std::min(a.lo[k], b.lo[k]);
        u.hi[k] = std::max(a.hi[k], b.hi[k]);
    }
    return u;
}

// Probability density sampled at the midpoints of a regular grid of cells.
// Normalized so that sum(values[i] * volumes[i]) == 1.
struct GridDensity {
    int dim = 1;
    Box box;
    std::array<int, 2> shape{0, 1}; // cells per axis (shape[1] == 1 when dim == 1)
    std::vector<Point> nodes;
    std::vector<double> volumes;
    std::vector<double> values;

    size_t size() const { return values.size(); }

    double cell_width(int axis) const { return box.length(axis) / shape[axis]; }

    // Total discrete mass, 1 up to rounding after construction.
    double mass() const {
        double s = 0.0;
        for (size_t i = 0; i < size(); ++i) s += values[i] * volumes[i];
        return s;
    }

    double max_value() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, v);
        return m;
    }

    // Flat index of the grid node nearest to p (clamped to the box).
    size_t nearest_node(const Point& p) const {
        std::array<int, 2> ix{0, 0};
        for (int k = 0; k < dim; ++k) {
            double t = (p[k] - box.lo[k]) / cell_width(k) - 0.5;
            int i = static_cast<int>(std::lround(t));
            ix[k] = std::min(std::max(i, 0), shape[k] - 1);
        }
        return static_cast<size_t>(ix[0]) * shape[1] + ix[1];
    }

    void dump_csv(std::ostream& os) const;
};

enum class DensityKind { UniformBox, TruncatedGaussian, SmoothBump, Mixture };

// Factory for the test densities. uniform-box and truncated-gaussian are
// continuous and bounded away from zero on their support.
struct DensityDescriptor {
    DensityKind kind = DensityKind::UniformBox;
    Box support;                      // uniform-box, smooth-bump bounding box
    Point mean{0.0, 0.0};             // truncated-gaussian
    double variance = 1.0;            // truncated-gaussian (isotropic)
    std::vector<double> weights;      // mixture
    std::vector<DensityDescriptor> components;

    static DensityDescriptor uniform_box(const Box& b) {
        DensityDescriptor d;
        d.kind = DensityKind::UniformBox;
        d.support = b;
        return d;
    }

    static DensityDescriptor truncated_gaussian(int dim, const Point& mean, double variance) {
        DensityDescriptor d;
        d.kind = DensityKind::TruncatedGaussian;
        d.support.dim = dim;
        d.mean = mean;
        d.variance = variance;
        return d;
    }

    static DensityDescriptor smooth_bump(const Box& b) {
        DensityDescriptor d;
        d.kind = DensityKind::SmoothBump;
        d.support = b;
        return d;
    }

    static DensityDescriptor mixture(std::vector<double> w, std::vector<DensityDescriptor> comps) {
        DensityDescriptor d;
        d.kind = DensityKind::Mixture;
        d.weights = std::move(w);
        d.components = std::move(comps);
        if (!d.components.empty()) d.support = d.components.front().support;
        return d;
    }

    // Unnormalized density value at p.
    double operator()(const Point& p) const {
        switch (kind) {
        case DensityKind::UniformBox:
            return support.contains(p) ? 1.0 : 0.0;
        case DensityKind::TruncatedGaussian: {
            double q = 0.0;
            for (int k = 0; k < support.dim; ++k) {
                double d = p[k] - mean[k];
                q += d * d;
            }
            return std::exp(-0.5 * q / variance);
        }
        case DensityKind::SmoothBump: {
            // C-infinity bump on the inscribed ellipse of the box
            double r2 = 0.0;
            for (int k = 0; k < support.dim; ++k) {
                double c = 0.5 * (support.lo[k] + support.hi[k]);
                double h = 0.5 * support.length(k);
                double t = (p[k] - c) / h;
                r2 += t * t;
            }
            if (r2 >= 1.0) return 0.0;
            return std::exp(-1.0 / (1.0 - r2));
        }
        case DensityKind::Mixture: {
            double s = 0.0;
            for (size_t i = 0; i < components.size(); ++i)
                s += weights[i] * components[i](p);
            return s;
        }
        }
        return 0.0;
    }

    int dim() const { return support.dim; }
};

// Midpoint-rule discretization of a descriptor on `resolution` cells per axis,
// normalized after sampling so the discrete mass is exactly 1.
inline GridDensity discretize(const DensityDescriptor& desc, int resolution, const Box& box) {
    if (resolution < 2) throw std::invalid_argument("discretize: resolution must be >= 2");
    if (desc.kind == DensityKind::TruncatedGaussian && desc.variance <= 0.0)
        throw std::invalid_argument("discretize: nonpositive variance");
    if (desc.kind == DensityKind::UniformBox || desc.kind == DensityKind::SmoothBump) {
        if (!(box.contains(desc.support.lo, 1e-12) && box.contains(desc.support.hi, 1e-12)))
            throw std::invalid_argument("discretize: descriptor support exceeds the grid box");
    }
    GridDensity g;
    g.dim = box.dim;
    g.box = box;
    g.shape = {resolution, box.dim == 2 ? resolution : 1};

    const int nx = g.shape[0], ny = g.shape[1];
    const double dx = box.length(0) / nx;
    const double dy = box.dim == 2 ? box.length(1) / ny : 1.0;
    const double vol = box.dim == 2 ? dx * dy : dx;

    g.nodes.reserve(static_cast<size_t>(nx) * ny);
    g.values.reserve(static_cast<size_t>(nx) * ny);
    g.volumes.assign(static_cast<size_t>(nx) * ny, vol);

    double total = 0.0;
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            Point p{box.lo[0] + (i + 0.5) * dx, box.dim == 2 ? box.lo[1] + (j + 0.5) * dy : 0.0};
            double v = desc(p);
            if (v < 0.0) throw std::invalid_argument("discretize: negative density value");
            g.nodes.push_back(p);
            g.values.push_back(v);
            total += v * vol;
        }
    }
    if (total <= 0.0) throw std::invalid_argument("discretize: descriptor vanishes on the box");
    for (double& v : g.values) v /= total;
    return g;
}

// Ent(rho) = sum rho log(rho) vol, with 0 log 0 = 0.
inline double entropy(const GridDensity& rho) {
    double s = 0.0;
    for (size_t i = 0; i < rho.size(); ++i) {
        double v = rho.values[i];
        if (v > 0.0) s += v * std::log(v) * rho.volumes[i];
    }
    return s;
}

// H(rho | mu) = sum rho log(rho/mu) vol. mu may be an unnormalized measure, in
// which case the result can be negative. Requires shared nodes and volumes.
inline double relative_entropy(const GridDensity& rho, const GridDensity& mu) {
    if (rho.size() != mu.size())
        throw std::invalid_argument("relative_entropy: grids differ in size");
    double s = 0.0;
    for (size_t i = 0; i < rho.size(); ++i) {
        double p = rho.values[i];
        if (p <= 0.0) continue;
        double q = mu.values[i];
        if (q <= 0.0)
            throw std::domain_error("relative_entropy: rho charges a node where mu vanishes");
        s += p * std::log(p / q) * rho.volumes[i];
    }
    return s;
}

inline void GridDensity::dump_csv(std::ostream& os) const {
    os << (dim == 2 ? "x0,x1,volume,value\n" : "x0,volume,value\n");
    char buf[128];
    for (size_t i = 0; i < size(); ++i) {
        if (dim == 2)
            std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", nodes[i][0], nodes[i][1],
                          volumes[i], values[i]);
        else
            std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", nodes[i][0], volumes[i],
                          values[i]);
        os << buf;
    }
}

} // namespace entot
