#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "entot/cost.hpp"
#include "entot/grid.hpp"

// Exact discrete Monge-Kantorovich solver (transportation simplex with
// recoverable dual potentials), the c-divergence and its Hessian field A(z),
// and the Riemannian volume-measure entropy H(rho1 | mu_g).

namespace entot {

struct SolveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransportPlan {
    Eigen::MatrixXd matrix;
    std::vector<double> source_masses, target_masses;
    double objective = 0.0;
};

struct DualPotentials {
    std::vector<double> psi;      // source potentials
    std::vector<double> psi_star; // target potentials
};

namespace detail {

struct BasicArc {
    int i, j; // source row, target column
    double flow;
};

// Rebuilds u, v from the basis tree: u[0] = 0, u_i + v_j = c_ij on basic arcs.
// Infinite costs are propagated as a large finite stand-in; stray degenerate
// arcs on infinite entries get pivoted out by the reduced-cost scan.
inline void tree_duals(const Eigen::MatrixXd& C, const std::vector<BasicArc>& basis,
                       const std::vector<std::vector<int>>& adj, std::vector<double>& u,
                       std::vector<double>& v, double big) {
    const int m = static_cast<int>(u.size());
    std::fill(u.begin(), u.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    std::vector<char> seen(u.size() + v.size(), 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    while (!queue.empty()) {
        int node = queue.front();
        queue.pop_front();
        for (int a : adj[node]) {
            const BasicArc& arc = basis[a];
            double c = C(arc.i, arc.j);
            if (!std::isfinite(c)) c = big;
            int other = (node == arc.i) ? m + arc.j : arc.i;
            if (seen[other]) continue;
            seen[other] = 1;
            if (other >= m)
                v[other - m] = c - u[arc.i];
            else
                u[other] = c - v[arc.j];
            queue.push_back(other);
        }
    }
}

// Path of basic-arc indices between two tree nodes.
inline std::vector<int> tree_path(int from, int to, const std::vector<BasicArc>& basis,
                                  const std::vector<std::vector<int>>& adj, int m) {
    std::vector<int> parent_arc(adj.size(), -1), parent_node(adj.size(), -1);
    std::deque<int> queue{from};
    std::vector<char> seen(adj.size(), 0);
    seen[from] = 1;
    while (!queue.empty()) {
        int node = queue.front();
        queue.pop_front();
        if (node == to) break;
        for (int a : adj[node]) {
            const BasicArc& arc = basis[a];
            int other = (node == arc.i) ? m + arc.j : arc.i;
            if (seen[other]) continue;
            seen[other] = 1;
            parent_arc[other] = a;
            parent_node[other] = node;
            queue.push_back(other);
        }
    }
    std::vector<int> path;
    for (int node = to; node != from; node = parent_node[node]) {
        if (parent_arc[node] < 0) throw SolveError("transport simplex: basis tree disconnected");
        path.push_back(parent_arc[node]);
    }
    return path;
}

} // namespace detail

// Optimal basic solution of the transportation LP and its dual potentials.
// North-west-corner start, Dantzig pivoting with a switch to Bland's rule
// after a run of degenerate pivots. Duals are tightened by a double
// c-transform (values on populated rows/columns are unchanged) and normalized
// so that psi_star is 0 at the first populated target node.
inline std::pair<TransportPlan, DualPotentials>
solve_exact(const std::vector<double>& a, const std::vector<double>& b, const CostMatrix& cm) {
    using detail::BasicArc;
    const Eigen::MatrixXd& C = cm.entries;
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    if (C.rows() != m || C.cols() != n)
        throw std::invalid_argument("solve_exact: cost matrix shape mismatch");
    double suma = 0.0, sumb = 0.0;
    for (double x : a) suma += x;
    for (double x : b) sumb += x;
    if (std::abs(suma - sumb) > 1e-10)
        throw std::invalid_argument("solve_exact: marginals have different total mass");

    double cmax = 0.0;
    for (int i = 0; i < m; ++i) {
        bool finite_row = false;
        for (int j = 0; j < n; ++j) {
            if (std::isfinite(C(i, j))) {
                finite_row = true;
                cmax = std::max(cmax, std::abs(C(i, j)));
            }
        }
        if (!finite_row && a[i] > 0.0) throw SolveError("solve_exact: all-infinite row");
    }
    for (int j = 0; j < n; ++j) {
        bool finite_col = false;
        for (int i = 0; i < m; ++i)
            if (std::isfinite(C(i, j))) finite_col = true;
        if (!finite_col && b[j] > 0.0) throw SolveError("solve_exact: all-infinite column");
    }
    const double big = std::max(1.0, cmax) * 1e13;
    const double opt_tol = std::max(1.0, cmax) * 1e-11;

    // north-west corner
    std::vector<BasicArc> basis;
    basis.reserve(m + n - 1);
    {
        std::vector<double> ra = a, rb = b;
        int i = 0, j = 0;
        while (true) {
            double f = std::min(ra[i], rb[j]);
            basis.push_back({i, j, f});
            ra[i] -= f;
            rb[j] -= f;
            if (i == m - 1 && j == n - 1) break;
            // keep exactly m+n-1 arcs: on ties advance only one index
            if (ra[i] <= rb[j] && i < m - 1)
                ++i;
            else
                ++j;
        }
        if (static_cast<int>(basis.size()) != m + n - 1)
            throw SolveError("solve_exact: degenerate initialization");
    }

    std::vector<std::vector<int>> adj(m + n);
    for (int t = 0; t < static_cast<int>(basis.size()); ++t) {
        adj[basis[t].i].push_back(t);
        adj[m + basis[t].j].push_back(t);
    }
    std::vector<double> u(m), v(n);

    const long max_pivots = std::max<long>(200000, 50L * (m + n));
    long degenerate_streak = 0;
    bool bland = false;

    for (long pivot = 0;; ++pivot) {
        if (pivot > max_pivots)
            throw SolveError("solve_exact: pivot limit exceeded (cycle guard)");
        detail::tree_duals(C, basis, adj, u, v, big);

        // entering arc
        int ei = -1, ej = -1;
        double best = -opt_tol;
        for (int i = 0; i < m && (!bland || ei < 0); ++i) {
            for (int j = 0; j < n; ++j) {
                double c = C(i, j);
                if (!std::isfinite(c)) continue;
                double r = c - u[i] - v[j];
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                    if (bland) break; // lowest (i, j) in lexicographic order
                }
            }
        }
        if (ei < 0) break; // optimal

        std::vector<int> path = detail::tree_path(m + ej, ei, basis, adj, m);
        // cycle = entering arc then path arcs; signs alternate starting with -
        double theta = kInf;
        int leave = -1;
        for (size_t t = 0; t < path.size(); t += 2) {
            const BasicArc& arc = basis[path[t]];
            if (arc.flow < theta || (arc.flow == theta && leave >= 0 && path[t] < leave)) {
                theta = arc.flow;
                leave = path[t];
            }
        }
        if (leave < 0) throw SolveError("solve_exact: no leaving arc");

        for (size_t t = 0; t < path.size(); ++t)
            basis[path[t]].flow += (t % 2 == 0) ? -theta : theta;

        if (theta <= 0.0) {
            if (++degenerate_streak > m + n) bland = true;
        } else {
            degenerate_streak = 0;
        }

        // replace leaving arc by the entering one
        auto drop = [&](std::vector<int>& list, int arc_id) {
            list.erase(std::find(list.begin(), list.end(), arc_id));
        };
        drop(adj[basis[leave].i], leave);
        drop(adj[m + basis[leave].j], leave);
        basis[leave] = {ei, ej, theta};
        adj[ei].push_back(leave);
        adj[m + ej].push_back(leave);
    }

    TransportPlan plan;
    plan.source_masses = a;
    plan.target_masses = b;
    plan.matrix = Eigen::MatrixXd::Zero(m, n);
    for (const BasicArc& arc : basis) {
        if (arc.flow <= 0.0) continue;
        if (!std::isfinite(C(arc.i, arc.j)))
            throw SolveError("solve_exact: no finite-cost feasible assignment");
        plan.matrix(arc.i, arc.j) = arc.flow;
        plan.objective += arc.flow * C(arc.i, arc.j);
    }

    // double c-transform: exact on populated rows/columns, lifts the rest
    DualPotentials duals;
    duals.psi = u;
    duals.psi_star.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double lo = kInf;
        for (int i = 0; i < m; ++i)
            if (std::isfinite(C(i, j))) lo = std::min(lo, C(i, j) - duals.psi[i]);
        duals.psi_star[j] = lo;
    }
    for (int i = 0; i < m; ++i) {
        double lo = kInf;
        for (int j = 0; j < n; ++j)
            if (std::isfinite(C(i, j))) lo = std::min(lo, C(i, j) - duals.psi_star[j]);
        duals.psi[i] = lo;
    }
    int j0 = 0;
    while (j0 < n - 1 && b[j0] <= 0.0) ++j0;
    const double shift = duals.psi_star[j0];
    for (double& x : duals.psi_star) x -= shift;
    for (double& x : duals.psi) x += shift;
    return {std::move(plan), std::move(duals)};
}

inline double strong_duality_gap(const TransportPlan& plan, const DualPotentials& duals) {
    double dual = 0.0;
    for (size_t i = 0; i < plan.source_masses.size(); ++i)
        dual += plan.source_masses[i] * duals.psi[i];
    for (size_t j = 0; j < plan.target_masses.size(); ++j)
        dual += plan.target_masses[j] * duals.psi_star[j];
    return std::abs(plan.objective - dual);
}

// Monotone rearrangement T = F1^{-1} o F0 at the source nodes; optimal for
// every strictly convex cost in one dimension.
inline std::vector<double> monge_map_1d(const GridDensity& rho0, const GridDensity& rho1) {
    if (rho0.dim != 1 || rho1.dim != 1)
        throw std::invalid_argument("monge_map_1d: densities must be one-dimensional");
    const size_t n = rho1.size();
    std::vector<double> cum1(n + 1, 0.0);
    for (size_t j = 0; j < n; ++j) cum1[j + 1] = cum1[j] + rho1.values[j] * rho1.volumes[j];

    auto invert = [&](double q) {
        // piecewise-linear CDF through cell boundaries
        q = std::min(std::max(q, 0.0), cum1[n]);
        size_t j = std::upper_bound(cum1.begin(), cum1.end(), q) - cum1.begin();
        if (j > 0) --j;
        if (j >= n) j = n - 1;
        double mass = rho1.values[j] * rho1.volumes[j];
        double left = rho1.nodes[j][0] - 0.5 * rho1.cell_width(0);
        double frac = mass > 0.0 ? (q - cum1[j]) / mass : 0.5;
        return left + frac * rho1.cell_width(0);
    };

    std::vector<double> image(rho0.size());
    double acc = 0.0;
    for (size_t i = 0; i < rho0.size(); ++i) {
        double mi = rho0.values[i] * rho0.volumes[i];
        image[i] = invert(acc + 0.5 * mi); // CDF at the cell midpoint
        acc += mi;
    }
    return image;
}

namespace detail {

// Linear (bilinear in 2-D) interpolation of psi_star between target nodes;
// +inf outside the grid box.
inline double interp_psi_star(const GridDensity& rho1, const std::vector<double>& psi_star,
                              const Point& y) {
    if (!rho1.box.contains(y, 1e-12)) return kInf;
    const int nx = rho1.shape[0], ny = rho1.shape[1];
    auto axis_pos = [&](int k, int cells) {
        double t = (y[k] - rho1.box.lo[k]) / rho1.cell_width(k) - 0.5;
        int i0 = static_cast<int>(std::floor(t));
        i0 = std::min(std::max(i0, 0), cells - 2 >= 0 ? cells - 2 : 0);
        double w = cells > 1 ? std::min(std::max(t - i0, 0.0), 1.0) : 0.0;
        return std::pair<int, double>(i0, w);
    };
    if (rho1.dim == 1) {
        auto [i0, w] = axis_pos(0, nx);
        return (1.0 - w) * psi_star[i0] + w * psi_star[std::min(i0 + 1, nx - 1)];
    }
    auto [i0, wx] = axis_pos(0, nx);
    auto [j0, wy] = axis_pos(1, ny);
    auto at = [&](int i, int j) { return psi_star[static_cast<size_t>(i) * ny + j]; };
    int i1 = std::min(i0 + 1, nx - 1), j1 = std::min(j0 + 1, ny - 1);
    return (1.0 - wx) * ((1.0 - wy) * at(i0, j0) + wy * at(i0, j1)) +
           wx * ((1.0 - wy) * at(i1, j0) + wy * at(i1, j1));
}

} // namespace detail

// D[y | x_i*] = g(x_i - y) - psi(x_i) - psi*(y); +inf outside the supports.
inline double c_divergence(const ConvexCost& cost, const GridDensity& rho0,
                           const GridDensity& rho1, const DualPotentials& duals, size_t i,
                           const Point& y) {
    if (rho0.values[i] <= 0.0) return kInf;
    if (!rho1.box.contains(y, 1e-12)) return kInf;
    if (rho1.values[rho1.nearest_node(y)] <= 0.0) return kInf;
    double ps = detail::interp_psi_star(rho1, duals.psi_star, y);
    Point z{rho0.nodes[i][0] - y[0], rho0.nodes[i][1] - y[1]};
    return cost(z) - duals.psi[i] - ps;
}

// Barycentric image of source row i under the plan.
inline Point monge_image(const TransportPlan& plan, const GridDensity& rho0,
                         const GridDensity& rho1, size_t i) {
    double mass = 0.0;
    Point p{0.0, 0.0};
    for (size_t j = 0; j < rho1.size(); ++j) {
        double f = plan.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (f <= 0.0) continue;
        mass += f;
        p[0] += f * rho1.nodes[j][0];
        p[1] += f * rho1.nodes[j][1];
    }
    if (mass <= 0.0) return rho0.nodes[i];
    return {p[0] / mass, p[1] / mass};
}

// Inverse Monge map on the grid: the argmax source of each plan column. The
// count of columns carrying more than one positive entry measures the
// residual multivaluedness of the inversion.
inline std::vector<int> inverse_source_index(const TransportPlan& plan, int* multivalued = nullptr) {
    const Eigen::Index m = plan.matrix.rows(), n = plan.matrix.cols();
    std::vector<int> inv(static_cast<size_t>(n), 0);
    int multi = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        double best = -1.0;
        int arg = 0, positive = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            double f = plan.matrix(i, j);
            if (f > 0.0) ++positive;
            if (f > best) {
                best = f;
                arg = static_cast<int>(i);
            }
        }
        inv[static_cast<size_t>(j)] = arg;
        if (positive > 1) ++multi;
    }
    if (multivalued) *multivalued = multi;
    return inv;
}

struct HessianOptions {
    double step = 0.0;          // physical step; 0 means 2 grid cells
    double ellipticity = 1e-5;  // eigenvalues of A(z) must lie in (eps, 1/eps)
};

// Central second differences of y -> D[y | z] at the target node nearest z.
// The inverse image z_* is the barycentric source of that plan column, psi(z_*)
// drops out of the differences, and psi* is evaluated at exact grid nodes so
// no interpolation error enters the stencil.
inline Eigen::Matrix2d divergence_hessian(const ConvexCost& cost, const GridDensity& rho0,
                                          const GridDensity& rho1, const TransportPlan& plan,
                                          const DualPotentials& duals, const Point& z,
                                          const HessianOptions& opts = {}) {
    const int nx = rho1.shape[0], ny = rho1.shape[1];
    const size_t j = rho1.nearest_node(z);
    const int jx = static_cast<int>(j) / ny, jy = static_cast<int>(j) % ny;

    int sx = opts.step > 0.0
                 ? std::max(1, static_cast<int>(std::lround(opts.step / rho1.cell_width(0))))
                 : 2;
    int sy = rho1.dim == 2
                 ? (opts.step > 0.0
                        ? std::max(1, static_cast<int>(std::lround(opts.step / rho1.cell_width(1))))
                        : 2)
                 : 0;
    if (jx - sx < 0 || jx + sx >= nx || (rho1.dim == 2 && (jy - sy < 0 || jy + sy >= ny)))
        throw SolveError("divergence_hessian: stencil leaves the grid (boundary proximity)");

    // z_* via the plan column at the stencil center
    double colmass = 0.0;
    Point zstar{0.0, 0.0};
    for (Eigen::Index i = 0; i < plan.matrix.rows(); ++i) {
        double f = plan.matrix(i, static_cast<Eigen::Index>(j));
        if (f <= 0.0) continue;
        colmass += f;
        zstar[0] += f * rho0.nodes[static_cast<size_t>(i)][0];
        zstar[1] += f * rho0.nodes[static_cast<size_t>(i)][1];
    }
    if (colmass <= 0.0) throw SolveError("divergence_hessian: empty plan column at z");
    zstar[0] /= colmass;
    zstar[1] /= colmass;

    auto f = [&](int ix, int iy) {
        size_t idx = static_cast<size_t>(ix) * ny + iy;
        if (rho1.values[idx] <= 0.0)
            throw SolveError("divergence_hessian: stencil leaves the support");
        const Point& yn = rho1.nodes[idx];
        Point d{zstar[0] - yn[0], zstar[1] - yn[1]};
        return cost(d) - duals.psi_star[idx];
    };

    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    const double hx = sx * rho1.cell_width(0);
    if (rho1.dim == 1) {
        A(0, 0) = (f(jx - sx, 0) - 2.0 * f(jx, 0) + f(jx + sx, 0)) / (hx * hx);
        A(1, 1) = 1.0;
    } else {
        const double hy = sy * rho1.cell_width(1);
        A(0, 0) = (f(jx - sx, jy) - 2.0 * f(jx, jy) + f(jx + sx, jy)) / (hx * hx);
        A(1, 1) = (f(jx, jy - sy) - 2.0 * f(jx, jy) + f(jx, jy + sy)) / (hy * hy);
        double mixed = (f(jx + sx, jy + sy) - f(jx + sx, jy - sy) - f(jx - sx, jy + sy) +
                        f(jx - sx, jy - sy)) /
                       (4.0 * hx * hy);
        A(0, 1) = A(1, 0) = mixed;
    }

    // ellipticity gate from Assumption 2
    double lo, hi;
    if (rho1.dim == 1) {
        lo = hi = A(0, 0);
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(A);
        lo = es.eigenvalues().minCoeff();
        hi = es.eigenvalues().maxCoeff();
    }
    if (!(lo > opts.ellipticity) || !(hi < 1.0 / opts.ellipticity))
        throw SolveError("divergence_hessian: result violates uniform ellipticity");
    return A;
}

// A(z) over the interior target nodes plus the Monge images of the sources.
struct DivergenceField {
    std::vector<Point> monge_images;        // per source node
    std::vector<Eigen::Matrix2d> hessians;  // per target node (valid entries only)
    std::vector<char> hessian_ok;
    double boundary_mass = 0.0;             // rho1 mass of skipped boundary cells
    int multivalued_columns = 0;
    size_t failed_nodes = 0;                // interior nodes with non-SPD results
};

inline DivergenceField build_divergence_field(const ConvexCost& cost, const GridDensity& rho0,
                                              const GridDensity& rho1, const TransportPlan& plan,
                                              const DualPotentials& duals,
                                              const HessianOptions& opts = {}) {
    DivergenceField field;
    field.monge_images.resize(rho0.size());
    for (size_t i = 0; i < rho0.size(); ++i)
        field.monge_images[i] = monge_image(plan, rho0, rho1, i);
    inverse_source_index(plan, &field.multivalued_columns);

    const int ny = rho1.shape[1];
    const int sx = opts.step > 0.0
                       ? std::max(1, static_cast<int>(std::lround(opts.step / rho1.cell_width(0))))
                       : 2;
    const int sy = rho1.dim == 2 ? sx : 0;
    field.hessians.assign(rho1.size(), Eigen::Matrix2d::Identity());
    field.hessian_ok.assign(rho1.size(), 0);
    for (size_t j = 0; j < rho1.size(); ++j) {
        const int jx = static_cast<int>(j) / ny, jy = static_cast<int>(j) % ny;
        const bool interior = jx >= 2 * sx && jx < rho1.shape[0] - 2 * sx &&
                              (rho1.dim == 1 || (jy >= 2 * sy && jy < rho1.shape[1] - 2 * sy));
        if (!interior || rho1.values[j] <= 0.0) {
            field.boundary_mass += rho1.values[j] * rho1.volumes[j];
            continue;
        }
        try {
            field.hessians[j] = divergence_hessian(cost, rho0, rho1, plan, duals, rho1.nodes[j], opts);
            field.hessian_ok[j] = 1;
        } catch (const SolveError&) {
            ++field.failed_nodes;
        }
    }
    return field;
}

// H(rho1 | mu_g) = 1/2 sum rho1 log det A over interior nodes, skipping the
// boundary cells whose mass the field reports separately.
inline double riemann_volume_entropy(const GridDensity& rho1, const DivergenceField& field,
                                     int dim) {
    if (field.failed_nodes > 0)
        throw SolveError("riemann_volume_entropy: non-SPD Hessians on interior nodes");
    double s = 0.0;
    for (size_t j = 0; j < rho1.size(); ++j) {
        if (!field.hessian_ok[j]) continue;
        double det = dim == 1 ? field.hessians[j](0, 0)
                              : field.hessians[j].topLeftCorner(2, 2).determinant();
        s += 0.5 * rho1.values[j] * std::log(det) * rho1.volumes[j];
    }
    return s;
}

} // namespace entot
