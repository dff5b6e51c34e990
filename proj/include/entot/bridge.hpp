#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "entot/cost.hpp"
#include "entot/exact.hpp"
#include "entot/grid.hpp"
#include "entot/sinkhorn.hpp"

// Exponential tilting of the transition kernel, the normalizers Z_h(x) and
// Lambda~_h(x), the Gaussian bridge marginal rho_1^h, and the f_{2h} coupling
// diagnostic.

namespace entot {

struct TiltedKernel {
    double h = 0.0;
    double log_lambda_h = 0.0;
    Eigen::MatrixXd divergence;   // D[y_j | x_i*] from the dual potentials
    Eigen::MatrixXd rows;         // per-source density rows of p~_h over target cells
    std::vector<double> log_lambda_tilde; // log Lambda~_h(x_i) = log int exp(-D/h) dy
    std::vector<double> z_values;         // Z_h(x_i) = Lambda~_h(x_i) / Lambda_h
    std::vector<int> empty_rows;          // rows whose tilt underflowed to zero
    int multivalued_columns = 0;
};

// Row for x_i: exp(-D[y|x_i*]/h) w_j, normalized; Z_h = Lambda~_h / Lambda_h.
// D is +inf off the supports, matching the divergence extension.
inline TiltedKernel tilt_kernel(const DualPotentials& duals, const CostMatrix& C,
                                const GridDensity& rho0, const GridDensity& rho1, double h,
                                double log_lambda_h) {
    const Eigen::Index m = C.entries.rows(), n = C.entries.cols();
    TiltedKernel k;
    k.h = h;
    k.log_lambda_h = log_lambda_h;
    k.divergence.resize(m, n);
    k.rows.resize(m, n);
    k.log_lambda_tilde.assign(static_cast<size_t>(m), -kInf);
    k.z_values.assign(static_cast<size_t>(m), 0.0);

    for (Eigen::Index i = 0; i < m; ++i) {
        const bool on_support = rho0.values[static_cast<size_t>(i)] > 0.0;
        double mx = -kInf;
        for (Eigen::Index j = 0; j < n; ++j) {
            double d = kInf;
            if (on_support && rho1.values[static_cast<size_t>(j)] > 0.0 &&
                std::isfinite(C.entries(i, j)))
                d = C.entries(i, j) - duals.psi[static_cast<size_t>(i)] -
                    duals.psi_star[static_cast<size_t>(j)];
            k.divergence(i, j) = d;
            if (std::isfinite(d))
                mx = std::max(mx, -d / h + std::log(rho1.volumes[static_cast<size_t>(j)]));
        }
        if (mx == -kInf) {
            k.empty_rows.push_back(static_cast<int>(i));
            k.rows.row(i).setZero();
            continue;
        }
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            double d = k.divergence(i, j);
            if (!std::isfinite(d)) continue;
            s += std::exp(-d / h + std::log(rho1.volumes[static_cast<size_t>(j)]) - mx);
        }
        const double log_lt = mx + std::log(s);
        k.log_lambda_tilde[static_cast<size_t>(i)] = log_lt;
        k.z_values[static_cast<size_t>(i)] = std::exp(log_lt - log_lambda_h);
        for (Eigen::Index j = 0; j < n; ++j) {
            double d = k.divergence(i, j);
            k.rows(i, j) = std::isfinite(d) ? std::exp(-d / h - log_lt) : 0.0;
        }
    }
    return k;
}

// Lemma 1(ii) diagnostic: Lambda~_h(x) sqrt(det A(x*)) / (2 pi h)^{d/2} -> 1.
inline double lambda_tilde_ratio(const TiltedKernel& kernel, size_t i, const Eigen::Matrix2d& A,
                                 int dim) {
    const double det = dim == 1 ? A(0, 0) : A.topLeftCorner(2, 2).determinant();
    return std::exp(kernel.log_lambda_tilde[i]) * std::sqrt(det) /
           std::pow(2.0 * M_PI * kernel.h, 0.5 * dim);
}

// rho0-mean of the ratio over sources whose Monge image has a valid Hessian.
inline double mean_lambda_tilde_ratio(const TiltedKernel& kernel, const GridDensity& rho0,
                                      const GridDensity& rho1, const DivergenceField& field,
                                      int dim) {
    double acc = 0.0, mass = 0.0;
    for (size_t i = 0; i < rho0.size(); ++i) {
        const double a = rho0.values[i] * rho0.volumes[i];
        if (a <= 0.0) continue;
        const size_t j = rho1.nearest_node(field.monge_images[i]);
        if (!field.hessian_ok[j]) continue;
        acc += a * lambda_tilde_ratio(kernel, i, field.hessians[j], dim);
        mass += a;
    }
    if (mass <= 0.0) throw SolveError("mean_lambda_tilde_ratio: no interior images");
    return acc / mass;
}

// Lemma 1(iii): -int log Z_h(x) rho0(x) dx.
inline double z_integral(const TiltedKernel& kernel, const GridDensity& rho0) {
    double s = 0.0;
    for (size_t i = 0; i < rho0.size(); ++i) {
        const double a = rho0.values[i] * rho0.volumes[i];
        if (a <= 0.0) continue;
        s -= a * (kernel.log_lambda_tilde[i] - kernel.log_lambda_h);
    }
    return s;
}

struct BridgeMarginal {
    GridDensity rho1_h;      // law of Y under rho0(x) p~_h(x, y)
    double sup_error = 0.0;  // max over interior support nodes of |rho1_h - rho1|
    double ratio_lo = kInf, ratio_hi = 0.0; // range of rho1_h / rho1 on the interior
};

// Interior = nodes at least `margin` (physical length) away from the support
// box boundary; the boundary layer of width O(sqrt(h)) is excluded from the
// sup norm, matching the pointwise statement of Lemma 1(iv).
inline BridgeMarginal bridge_marginal(const TiltedKernel& kernel, const GridDensity& rho0,
                                      const GridDensity& rho1, double margin) {
    BridgeMarginal out;
    out.rho1_h = rho1;
    for (size_t j = 0; j < rho1.size(); ++j) {
        double s = 0.0;
        for (size_t i = 0; i < rho0.size(); ++i)
            s += rho0.values[i] * rho0.volumes[i] *
                 kernel.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        out.rho1_h.values[j] = s;
    }
    for (size_t j = 0; j < rho1.size(); ++j) {
        if (rho1.values[j] <= 0.0) continue;
        bool interior = true;
        for (int k = 0; k < rho1.dim; ++k) {
            double d = std::min(rho1.nodes[j][k] - rho1.box.lo[k],
                                rho1.box.hi[k] - rho1.nodes[j][k]);
            if (d < margin) interior = false;
        }
        if (!interior) continue;
        out.sup_error = std::max(out.sup_error, std::abs(out.rho1_h.values[j] - rho1.values[j]));
        const double r = out.rho1_h.values[j] / rho1.values[j];
        out.ratio_lo = std::min(out.ratio_lo, r);
        out.ratio_hi = std::max(out.ratio_hi, r);
    }
    return out;
}

struct F2hDiagnostic {
    TransportPlan plan;             // the f_{2h} coupling masses
    double rel_entropy_2h = 0.0;    // H(f_{2h} | mu~_{2h})
    double row_error = 0.0;         // max |row sum - rho0 mass|
    double col_error = 0.0;         // max |col sum - rho1 mass|
    double excluded_mass = 0.0;     // mass dropped by the rho1_h underflow guard
};

// f_{2h}(x, z) = sum_y rho0(x) p~_h(x, y) chi~_h(y, z), with chi~_h(y, z) =
// rho1(z) exp(-D[y|z]/h) / (Lambda~_h(z_*) rho1_h(y)); z_* is the plan-argmax
// inverse image, so D[. | z_k] reuses row z_* of the divergence matrix and the
// chi~ normalizer is exactly Lambda~_h(z_*).
inline F2hDiagnostic f2h_coupling(const TiltedKernel& kernel_h, const TiltedKernel& kernel_2h,
                                  const TransportPlan& exact_plan, const GridDensity& rho0,
                                  const GridDensity& rho1, const BridgeMarginal& marginal) {
    const Eigen::Index m = kernel_h.rows.rows(), n = kernel_h.rows.cols();
    std::vector<int> inv = inverse_source_index(exact_plan, nullptr);

    // B(j, k) = chi~_h(y_j, z_k) w_k = rows(x(k), j) rho1_k w_k / rho1_h(y_j)
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
    F2hDiagnostic out;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double denom = marginal.rho1_h.values[static_cast<size_t>(j)];
        if (denom < 1e-300) {
            // the paper divides by rho1_h(y), positive on spt(rho1) but prone
            // to numerical underflow; skip the cell and report its mass
            out.excluded_mass += rho1.values[static_cast<size_t>(j)] *
                                 rho1.volumes[static_cast<size_t>(j)];
            continue;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            const double bk = rho1.values[static_cast<size_t>(k)] *
                              rho1.volumes[static_cast<size_t>(k)];
            if (bk <= 0.0) continue;
            B(j, k) = kernel_h.rows(inv[static_cast<size_t>(k)], j) * bk / denom;
        }
    }

    // R(i, j) = p~_h(x_i, y_j) w_j; f2h = diag(a) R B
    Eigen::MatrixXd R = kernel_h.rows;
    for (Eigen::Index j = 0; j < n; ++j)
        R.col(j) *= rho1.volumes[static_cast<size_t>(j)];
    Eigen::MatrixXd f = R * B;
    for (Eigen::Index i = 0; i < m; ++i)
        f.row(i) *= rho0.values[static_cast<size_t>(i)] * rho0.volumes[static_cast<size_t>(i)];

    out.plan.matrix = std::move(f);
    out.plan.source_masses.resize(static_cast<size_t>(m));
    out.plan.target_masses.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < m; ++i) {
        const double a = rho0.values[static_cast<size_t>(i)] * rho0.volumes[static_cast<size_t>(i)];
        out.plan.source_masses[static_cast<size_t>(i)] = a;
        out.row_error = std::max(out.row_error, std::abs(out.plan.matrix.row(i).sum() - a));
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const double b = rho1.values[static_cast<size_t>(k)] * rho1.volumes[static_cast<size_t>(k)];
        out.plan.target_masses[static_cast<size_t>(k)] = b;
        out.col_error = std::max(out.col_error, std::abs(out.plan.matrix.col(k).sum() - b));
    }

    // H(f_{2h} | mu~_{2h}) against the tilted kernel at 2h
    double H = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double a = rho0.values[static_cast<size_t>(i)] * rho0.volumes[static_cast<size_t>(i)];
        for (Eigen::Index k = 0; k < n; ++k) {
            const double fik = out.plan.matrix(i, k);
            if (fik <= 0.0) continue;
            const double mu = a * kernel_2h.rows(i, k) * rho1.volumes[static_cast<size_t>(k)];
            if (mu <= 0.0)
                throw SolveError("f2h_coupling: f_{2h} charges a zero cell of mu~_{2h}");
            H += fik * std::log(fik / mu);
        }
    }
    out.rel_entropy_2h = H;
    return out;
}

struct BridgeRow {
    double h = 0.0;
    double lambda_ratio = 0.0;
    double mean_lambda_tilde_ratio = 0.0;
    double z_integral = 0.0;
    double sup_error = 0.0;
    double f2h_entropy = 0.0;
    double f2h_row_error = 0.0, f2h_col_error = 0.0;
    double ratio_lo = 0.0, ratio_hi = 0.0;
    int resolution = 0;
    bool ok = false;
    std::string error;
};

struct BridgeSweep {
    std::vector<BridgeRow> rows;
    double predicted_z_limit = 0.0; // -1/2 log det grad^2 g(0) + H(rho1 | mu_g)
    double max_rho1 = 0.0;
};

// Per-h bridge diagnostics on rule-refined grids (Lemma 1 (i)-(iv) plus the
// f_{2h} relative entropy from the proof of Theorem 1).
inline BridgeSweep bridge_sweep(const SweepSetup& setup, const std::vector<double>& h_list,
                                double interior_margin) {
    for (size_t k = 1; k < h_list.size(); ++k)
        if (!(h_list[k] < h_list[k - 1]))
            throw std::invalid_argument("bridge_sweep: h_list must be strictly decreasing");
    BridgeSweep sweep;
    const int dim = setup.cost.dim;

    for (double h : h_list) {
        BridgeRow row;
        row.h = h;
        try {
            const int res0 = setup.rule.resolution_for(h, setup.box0.length(0));
            const int res1 = setup.rule.resolution_for(h, setup.box1.length(0));
            row.resolution = res0;
            GridDensity rho0 = discretize(setup.desc0, res0, setup.box0);
            GridDensity rho1 = discretize(setup.desc1, res1, setup.box1);
            CostMatrix C = cost_matrix(setup.cost, rho0.nodes, rho1.nodes);
            std::vector<double> am(rho0.size()), bm(rho1.size());
            for (size_t i = 0; i < am.size(); ++i) am[i] = rho0.values[i] * rho0.volumes[i];
            for (size_t j = 0; j < bm.size(); ++j) bm[j] = rho1.values[j] * rho1.volumes[j];
            auto [plan, duals] = solve_exact(am, bm, C);
            DivergenceField field =
                build_divergence_field(setup.cost, rho0, rho1, plan, duals, setup.hessian);

            const double log_lam_h = std::log(lambda_h(setup.cost, h));
            const double log_lam_2h = std::log(lambda_h(setup.cost, 2.0 * h));
            TiltedKernel kern_h = tilt_kernel(duals, C, rho0, rho1, h, log_lam_h);
            TiltedKernel kern_2h = tilt_kernel(duals, C, rho0, rho1, 2.0 * h, log_lam_2h);
            if (!kern_h.empty_rows.empty())
                throw SolveError("bridge_sweep: tilted kernel has empty rows");

            row.lambda_ratio = lambda_h_ratio(setup.cost, h);
            row.mean_lambda_tilde_ratio = mean_lambda_tilde_ratio(kern_h, rho0, rho1, field, dim);
            row.z_integral = z_integral(kern_h, rho0);

            BridgeMarginal marg = bridge_marginal(kern_h, rho0, rho1, interior_margin);
            row.sup_error = marg.sup_error;
            row.ratio_lo = marg.ratio_lo;
            row.ratio_hi = marg.ratio_hi;

            F2hDiagnostic f2h = f2h_coupling(kern_h, kern_2h, plan, rho0, rho1, marg);
            row.f2h_entropy = f2h.rel_entropy_2h;
            row.f2h_row_error = f2h.row_error;
            row.f2h_col_error = f2h.col_error;

            if (h == h_list.back()) {
                sweep.predicted_z_limit = -0.5 * std::log(setup.cost.det_hessian_at_zero()) +
                                          riemann_volume_entropy(rho1, field, dim);
                sweep.max_rho1 = rho1.max_value();
            }
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        sweep.rows.push_back(std::move(row));
    }
    return sweep;
}

} // namespace entot
