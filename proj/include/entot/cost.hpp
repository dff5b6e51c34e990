#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>

#include "entot/grid.hpp"

// Strictly convex translation-invariant costs g(x - y), their matrices on
// grids, and the normalizer Lambda_h with its small-h behaviour.

namespace entot {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConvexCost {
    int dim = 1;
    std::string name;
    std::function<double(const Point&)> evaluate;
    std::function<Point(const Point&)> gradient;
    Eigen::Matrix2d hessian_at_zero = Eigen::Matrix2d::Identity(); // top-left dim x dim block
    double truncation_radius = kInf;

    double operator()(const Point& z) const {
        double r2 = 0.0;
        for (int k = 0; k < dim; ++k) r2 += z[k] * z[k];
        if (r2 > truncation_radius * truncation_radius) return kInf;
        return evaluate(z);
    }

    double det_hessian_at_zero() const {
        if (dim == 1) return hessian_at_zero(0, 0);
        return hessian_at_zero.topLeftCorner(2, 2).determinant();
    }
};

inline void require_spd(const Eigen::Matrix2d& m, int dim) {
    if (std::abs(m(0, 1) - m(1, 0)) > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("cost matrix M must be symmetric");
    if (dim == 1) {
        if (m(0, 0) <= 0.0) throw std::invalid_argument("cost matrix M must be positive definite");
        return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("cost matrix M must be positive definite");
}

// g(z) = 1/2 z^T M z
inline ConvexCost scaled_quadratic_cost(const Eigen::Matrix2d& M, int dim, double radius = kInf) {
    require_spd(M, dim);
    ConvexCost c;
    c.dim = dim;
    c.name = "scaled-quadratic";
    c.hessian_at_zero = M;
    c.truncation_radius = radius;
    c.evaluate = [M, dim](const Point& z) {
        double s = 0.0;
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b) s += z[a] * M(a, b) * z[b];
        return 0.5 * s;
    };
    c.gradient = [M, dim](const Point& z) {
        Point g{0.0, 0.0};
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b) g[a] += M(a, b) * z[b];
        return g;
    };
    return c;
}

inline ConvexCost quadratic_cost(int dim, double radius = kInf) {
    return scaled_quadratic_cost(Eigen::Matrix2d::Identity(), dim, radius);
}

// g(z) = sum_i (cosh(z_i) - 1); hessian at 0 is the identity.
inline ConvexCost cosh_sum_cost(int dim, double radius = kInf) {
    ConvexCost c;
    c.dim = dim;
    c.name = "cosh-sum";
    c.hessian_at_zero = Eigen::Matrix2d::Identity();
    c.truncation_radius = radius;
    c.evaluate = [dim](const Point& z) {
        double s = 0.0;
        for (int k = 0; k < dim; ++k) s += std::cosh(z[k]) - 1.0;
        return s;
    };
    c.gradient = [dim](const Point& z) {
        Point g{0.0, 0.0};
        for (int k = 0; k < dim; ++k) g[k] = std::sinh(z[k]);
        return g;
    };
    return c;
}

struct CostMatrix {
    Eigen::MatrixXd entries; // +inf beyond the truncation radius
    std::vector<Point> source_nodes, target_nodes;
};

inline CostMatrix cost_matrix(const ConvexCost& cost, const std::vector<Point>& xs,
                              const std::vector<Point>& ys) {
    CostMatrix m;
    m.source_nodes = xs;
    m.target_nodes = ys;
    m.entries.resize(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
    for (size_t i = 0; i < xs.size(); ++i) {
        for (size_t j = 0; j < ys.size(); ++j) {
            Point z{xs[i][0] - ys[j][0], xs[i][1] - ys[j][1]};
            m.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cost(z);
        }
    }
    return m;
}

// Cell count per axis that resolves the width-sqrt(h) integrand: cell size
// <= sqrt(h) / factor over [-R, R].
inline int lambda_quad_resolution(const ConvexCost& cost, double h, double factor = 5.0) {
    double cell = std::sqrt(h) / factor;
    double n = std::ceil(2.0 * cost.truncation_radius / cell);
    return static_cast<int>(std::min(std::max(n, 64.0), 4e6));
}

// Lambda_h = int_{|z| <= R} exp(-g(z)/h) dz by the midpoint rule.
// Emits a warning when the integrand at the truncation boundary exceeds 1e-12
// (truncation too tight for this h).
inline double lambda_h(const ConvexCost& cost, double h, int quad_resolution = 0) {
    if (h <= 0.0) throw std::invalid_argument("lambda_h: h must be positive");
    if (!(cost.truncation_radius < kInf))
        throw std::invalid_argument("lambda_h: cost needs a finite truncation radius");
    if (quad_resolution <= 0) quad_resolution = lambda_quad_resolution(cost, h);

    const double R = cost.truncation_radius;
    const int n = quad_resolution;
    const double dz = 2.0 * R / n;
    double sum = 0.0;
    double boundary = 0.0;
    if (cost.dim == 1) {
        for (int i = 0; i < n; ++i) {
            double z = -R + (i + 0.5) * dz;
            sum += std::exp(-cost.evaluate({z, 0.0}) / h) * dz;
        }
        boundary = std::exp(-cost.evaluate({R, 0.0}) / h);
    } else {
        for (int i = 0; i < n; ++i) {
            double zx = -R + (i + 0.5) * dz;
            for (int j = 0; j < n; ++j) {
                double zy = -R + (j + 0.5) * dz;
                if (zx * zx + zy * zy > R * R) continue;
                sum += std::exp(-cost.evaluate({zx, zy}) / h) * dz * dz;
            }
        }
        boundary = std::exp(-cost.evaluate({R, 0.0}) / h);
    }
    if (boundary > 1e-12)
        std::cerr << "lambda_h: integrand " << boundary
                  << " at the truncation boundary; radius too tight for h=" << h << "\n";
    return sum;
}

// Lemma 1(i) diagnostic: Lambda_h sqrt(det grad^2 g(0)) / (2 pi h)^{d/2} -> 1.
inline double lambda_h_ratio(const ConvexCost& cost, double h, int quad_resolution = 0) {
    double lam = lambda_h(cost, h, quad_resolution);
    return lam * std::sqrt(cost.det_hessian_at_zero()) /
           std::pow(2.0 * M_PI * h, 0.5 * cost.dim);
}

// r(z) = g(z) - 1/2 z^T grad^2 g(0) z
inline double taylor_remainder(const ConvexCost& cost, const Point& z) {
    double q = 0.0;
    for (int a = 0; a < cost.dim; ++a)
        for (int b = 0; b < cost.dim; ++b) q += z[a] * cost.hessian_at_zero(a, b) * z[b];
    return cost.evaluate(z) - 0.5 * q;
}

// Default truncation: 4x the diameter of the union of the two supports keeps
// exp(-g/h) below 1e-12 at the boundary for every tested h.
inline double default_truncation_radius(const Box& box0, const Box& box1) {
    return 4.0 * box_union(box0, box1).diameter();
}

} // namespace entot
