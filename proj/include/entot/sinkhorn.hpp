#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "entot/cost.hpp"
#include "entot/exact.hpp"
#include "entot/grid.hpp"

// Log-domain Sinkhorn iteration for K'_h and K_h, plus the h-sweeps that
// estimate the small-h limit of the gap K_h - W_g/h.

namespace entot {

struct SinkhornOptions {
    double tol = 1e-9;       // max absolute marginal violation
    int max_iter = 100000;
    bool anneal = true;      // cold starts descend from anneal_start to h
    double anneal_start = 0.25;
    double anneal_factor = 3.0;
    int anneal_iters = 60;
    const std::vector<double>* warm_phi = nullptr;
    const std::vector<double>* warm_psi = nullptr;
    double warm_h = 0.0;     // parameter the warm duals were solved at
};

struct SinkhornCore {
    Eigen::MatrixXd plan;
    std::vector<double> phi, psi; // log-domain duals: pi = v w exp(phi + psi - C/h)
    double kh_prime = 0.0;
    int iterations = 0;
    double marginal_residual = 0.0;
};

namespace detail {

// One dual update sweep at parameter h; returns after updating psi then phi,
// so the source marginals are exact on exit.
inline void sinkhorn_pass(const Eigen::MatrixXd& C, double h, const std::vector<double>& lr0,
                          const std::vector<double>& lr1, const std::vector<double>& lv,
                          const std::vector<double>& lw, std::vector<double>& phi,
                          std::vector<double>& psi) {
    const Eigen::Index m = C.rows(), n = C.cols();
    for (Eigen::Index j = 0; j < n; ++j) {
        double mx = -kInf;
        for (Eigen::Index i = 0; i < m; ++i) {
            double c = C(i, j);
            if (!std::isfinite(c)) continue;
            mx = std::max(mx, lv[i] + phi[i] - c / h);
        }
        if (mx == -kInf) throw SolveError("sinkhorn: target column without finite-cost pairs");
        double s = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            double c = C(i, j);
            if (!std::isfinite(c)) continue;
            s += std::exp(lv[i] + phi[i] - c / h - mx);
        }
        psi[j] = lr1[j] - mx - std::log(s);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        double mx = -kInf;
        for (Eigen::Index j = 0; j < n; ++j) {
            double c = C(i, j);
            if (!std::isfinite(c)) continue;
            mx = std::max(mx, lw[j] + psi[j] - c / h);
        }
        if (mx == -kInf) throw SolveError("sinkhorn: source row without finite-cost pairs");
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            double c = C(i, j);
            if (!std::isfinite(c)) continue;
            s += std::exp(lw[j] + psi[j] - c / h - mx);
        }
        phi[i] = lr0[i] - mx - std::log(s);
    }
}

} // namespace detail

// Minimizes (1/h) sum pi C + sum pi log(pi / (v_i w_j)) over couplings of the
// cell masses a_i = rho0_i v_i and b_j = rho1_j w_j. The coupling entropy is
// taken relative to the product of cell volumes, so it discretizes the
// differential entropy of the continuous coupling. All arithmetic stays in
// the log domain; no kernel of raw exponentials is materialized.
inline SinkhornCore sinkhorn_core(const std::vector<double>& rho0, const std::vector<double>& vol0,
                                  const std::vector<double>& rho1, const std::vector<double>& vol1,
                                  const Eigen::MatrixXd& C, double h,
                                  const SinkhornOptions& opts = {}) {
    if (h <= 0.0) throw std::invalid_argument("sinkhorn: h must be positive");
    const size_t m_full = rho0.size(), n_full = rho1.size();

    // zero-mass cells (outside the discrete support) are excluded up front
    std::vector<int> act0, act1;
    for (size_t i = 0; i < m_full; ++i)
        if (rho0[i] > 0.0) act0.push_back(static_cast<int>(i));
    for (size_t j = 0; j < n_full; ++j)
        if (rho1[j] > 0.0) act1.push_back(static_cast<int>(j));
    const size_t m = act0.size(), n = act1.size();
    if (m == 0 || n == 0) throw SolveError("sinkhorn: empty support");

    Eigen::MatrixXd Ca(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    std::vector<double> lr0(m), lr1(n), lv(m), lw(n);
    for (size_t i = 0; i < m; ++i) {
        lr0[i] = std::log(rho0[act0[i]]);
        lv[i] = std::log(vol0[act0[i]]);
        for (size_t j = 0; j < n; ++j) Ca(i, j) = C(act0[i], act1[j]);
    }
    for (size_t j = 0; j < n; ++j) {
        lr1[j] = std::log(rho1[act1[j]]);
        lw[j] = std::log(vol1[act1[j]]);
    }

    std::vector<double> phi(m, 0.0), psi(n, 0.0);
    SinkhornCore out;

    if (opts.warm_phi && opts.warm_psi && opts.warm_h > 0.0) {
        const double scale = opts.warm_h / h;
        for (size_t i = 0; i < m; ++i) phi[i] = (*opts.warm_phi)[act0[i]] * scale;
        for (size_t j = 0; j < n; ++j) psi[j] = (*opts.warm_psi)[act1[j]] * scale;
    } else if (opts.anneal && h < opts.anneal_start) {
        // epsilon scaling: walk h down, rescaling the duals at each stage
        std::vector<double> stages;
        for (double hh = opts.anneal_start; hh > h * 1.0001; hh /= opts.anneal_factor)
            stages.push_back(hh);
        double prev = 0.0;
        for (double hh : stages) {
            if (prev > 0.0) {
                const double scale = prev / hh;
                for (double& x : phi) x *= scale;
                for (double& x : psi) x *= scale;
            }
            for (int it = 0; it < opts.anneal_iters; ++it)
                detail::sinkhorn_pass(Ca, hh, lr0, lr1, lv, lw, phi, psi);
            out.iterations += opts.anneal_iters;
            prev = hh;
        }
        const double scale = prev / h;
        for (double& x : phi) x *= scale;
        for (double& x : psi) x *= scale;
    }

    auto column_residual = [&]() {
        double worst = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (size_t i = 0; i < m; ++i) {
                double c = Ca(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                if (!std::isfinite(c)) continue;
                s += std::exp(lv[i] + phi[i] + lw[j] + psi[j] - c / h);
            }
            worst = std::max(worst, std::abs(s - std::exp(lr1[j] + lw[j])));
        }
        return worst;
    };

    bool converged = false;
    for (int it = 0; it < opts.max_iter; it += 1) {
        detail::sinkhorn_pass(Ca, h, lr0, lr1, lv, lw, phi, psi);
        ++out.iterations;
        if (it % 10 == 9 || it == opts.max_iter - 1) {
            out.marginal_residual = column_residual();
            if (out.marginal_residual <= opts.tol) {
                converged = true;
                break;
            }
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "sinkhorn: no convergence after " << out.iterations
            << " iterations, marginal residual " << out.marginal_residual;
        throw SolveError(msg.str());
    }

    out.plan = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m_full),
                                     static_cast<Eigen::Index>(n_full));
    out.phi.assign(m_full, -kInf);
    out.psi.assign(n_full, -kInf);
    double khp = 0.0;
    for (size_t i = 0; i < m; ++i) {
        out.phi[act0[i]] = phi[i];
        for (size_t j = 0; j < n; ++j) {
            double c = Ca(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (!std::isfinite(c)) continue;
            double p = std::exp(lv[i] + phi[i] + lw[j] + psi[j] - c / h);
            out.plan(act0[i], act1[j]) = p;
            // log(pi/(v w)) = phi + psi - C/h identically, so the primal
            // objective collapses to sum pi (phi + psi)
            khp += p * (phi[i] + psi[j]);
        }
    }
    for (size_t j = 0; j < n; ++j) out.psi[act1[j]] = psi[j];
    out.kh_prime = khp;
    return out;
}

struct EntropicSolution {
    Eigen::MatrixXd plan;
    std::vector<double> phi, psi;
    double kh_prime = 0.0;
    double kh = 0.0;
    double h = 0.0;
    int iterations = 0;
    double marginal_residual = 0.0;
};

// Entropic solution on grid densities; kh is the relative entropy of the plan
// against the discretized mu_h (computed directly, not through eq. K_h =
// K'_h - Ent(rho0) + log Lambda_h, which stays available as a cross-check).
inline EntropicSolution sinkhorn(const GridDensity& rho0, const GridDensity& rho1,
                                 const CostMatrix& C, double h, double log_lambda_h,
                                 const SinkhornOptions& opts = {}) {
    SinkhornCore core =
        sinkhorn_core(rho0.values, rho0.volumes, rho1.values, rho1.volumes, C.entries, h, opts);
    EntropicSolution sol;
    sol.h = h;
    sol.kh_prime = core.kh_prime;
    sol.iterations = core.iterations;
    sol.marginal_residual = core.marginal_residual;

    // H(pi | mu_h) with mu_h(i,j) = rho0_i v_i w_j exp(-C_ij/h) / Lambda_h:
    // log(pi/mu_h) = phi_i + psi_j - log rho0_i + log Lambda_h
    double kh = 0.0;
    for (Eigen::Index i = 0; i < core.plan.rows(); ++i) {
        for (Eigen::Index j = 0; j < core.plan.cols(); ++j) {
            double p = core.plan(i, j);
            if (p <= 0.0) continue;
            kh += p * (core.phi[static_cast<size_t>(i)] + core.psi[static_cast<size_t>(j)] -
                       std::log(rho0.values[static_cast<size_t>(i)]) + log_lambda_h);
        }
    }
    sol.kh = kh;
    sol.plan = std::move(core.plan);
    sol.phi = std::move(core.phi);
    sol.psi = std::move(core.psi);
    return sol;
}

// |K_h - (K'_h - Ent(rho0) + log Lambda_h)|, the coupling-independent identity.
inline double kh_identity_check(const EntropicSolution& sol, double ent_rho0,
                                double log_lambda_h) {
    return std::abs(sol.kh - (sol.kh_prime - ent_rho0 + log_lambda_h));
}

// Grid-h coupling: cell size <= sqrt(h) / (factor * metric_scale), where
// metric_scale absorbs the curvature of the cost (sqrt of the largest
// eigenvalue of grad^2 g(0) for Euclidean sweeps).
struct ResolutionRule {
    int base = 32;
    double factor = 5.0;
    double metric_scale = 1.0;

    int resolution_for(double h, double length) const {
        double cell = std::sqrt(h) / (factor * metric_scale);
        return std::max(base, static_cast<int>(std::ceil(length / cell)));
    }
};

struct GapRow {
    double h = 0.0;
    double kh = 0.0, kh_prime = 0.0, w_g = 0.0;
    double gap = 0.0;                  // kh - w_g / h
    double corrected_gap_prime = 0.0;  // kh_prime - w_g/h + (d/2) log(2 pi h)
    double identity_residual = 0.0;
    int iterations = 0;
    int resolution = 0;
    bool ok = false;
    std::string error;
};

struct GapSweep {
    std::vector<GapRow> rows;
    double predicted_limit = 0.0;    // -1/2 log det grad^2 g(0) + H(rho1 | mu_g)
    double extrapolated_limit = 0.0;
    double boundary_mass = 0.0;      // rho1 mass excluded from the Hessian field
};

// Least-squares fit of gap(h) = L + c1 sqrt(h) + c2 h on the 3 smallest h.
// The sqrt term tracks the support-boundary layer of compactly supported
// densities; on data that is exactly affine (or constant) in h the fit
// reproduces it exactly, since three points are interpolated.
inline double extrapolate_limit(const std::vector<std::pair<double, double>>& rows) {
    if (rows.size() < 3) throw std::invalid_argument("extrapolate_limit: need at least 3 rows");
    std::vector<std::pair<double, double>> sorted(rows);
    std::sort(sorted.begin(), sorted.end());
    sorted.resize(3); // three smallest h
    for (int k = 0; k < 2; ++k)
        if (sorted[k].first == sorted[k + 1].first)
            throw std::invalid_argument("extrapolate_limit: degenerate fit (duplicate h)");
    Eigen::Matrix3d A;
    Eigen::Vector3d y;
    for (int k = 0; k < 3; ++k) {
        const double h = sorted[k].first;
        A(k, 0) = 1.0;
        A(k, 1) = std::sqrt(h);
        A(k, 2) = h;
        y(k) = sorted[k].second;
    }
    Eigen::Vector3d coef = A.fullPivLu().solve(y);
    return coef(0);
}

struct SweepSetup {
    DensityDescriptor desc0, desc1;
    Box box0, box1;
    ConvexCost cost;
    ResolutionRule rule;
    SinkhornOptions sinkhorn;
    HessianOptions hessian;
};

// For each h: re-discretize at the rule's resolution, solve the exact problem
// once per resolution, run Sinkhorn, and record the gap row. The predicted
// limit comes from the Hessian field on the finest grid.
inline GapSweep gap_sweep(const SweepSetup& setup, const std::vector<double>& h_list) {
    for (size_t k = 1; k < h_list.size(); ++k)
        if (!(h_list[k] < h_list[k - 1]))
            throw std::invalid_argument("gap_sweep: h_list must be strictly decreasing");

    GapSweep sweep;
    const int dim = setup.cost.dim;

    struct Solved {
        GridDensity rho0, rho1;
        CostMatrix C;
        TransportPlan plan;
        DualPotentials duals;
        double w = 0.0, ent0 = 0.0;
    };
    std::map<int, Solved> cache;
    const Solved* finest = nullptr;

    for (double h : h_list) {
        GapRow row;
        row.h = h;
        try {
            const int res0 = setup.rule.resolution_for(h, setup.box0.length(0));
            row.resolution = res0;
            auto it = cache.find(res0);
            if (it == cache.end()) {
                Solved s;
                s.rho0 = discretize(setup.desc0, res0, setup.box0);
                const int res1 = setup.rule.resolution_for(h, setup.box1.length(0));
                s.rho1 = discretize(setup.desc1, res1, setup.box1);
                s.C = cost_matrix(setup.cost, s.rho0.nodes, s.rho1.nodes);
                std::vector<double> am(s.rho0.size()), bm(s.rho1.size());
                for (size_t i = 0; i < am.size(); ++i)
                    am[i] = s.rho0.values[i] * s.rho0.volumes[i];
                for (size_t j = 0; j < bm.size(); ++j)
                    bm[j] = s.rho1.values[j] * s.rho1.volumes[j];
                auto [plan, duals] = solve_exact(am, bm, s.C);
                s.plan = std::move(plan);
                s.duals = std::move(duals);
                s.w = s.plan.objective;
                s.ent0 = entropy(s.rho0);
                it = cache.emplace(res0, std::move(s)).first;
            }
            const Solved& s = it->second;
            finest = &s;

            const double lam = lambda_h(setup.cost, h);
            const double log_lam = std::log(lam);
            EntropicSolution sol = sinkhorn(s.rho0, s.rho1, s.C, h, log_lam, setup.sinkhorn);

            row.kh = sol.kh;
            row.kh_prime = sol.kh_prime;
            row.w_g = s.w;
            row.gap = sol.kh - s.w / h;
            row.corrected_gap_prime =
                sol.kh_prime - s.w / h + 0.5 * dim * std::log(2.0 * M_PI * h);
            row.identity_residual = kh_identity_check(sol, s.ent0, log_lam);
            row.iterations = sol.iterations;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        sweep.rows.push_back(std::move(row));
    }

    if (finest) {
        DivergenceField field = build_divergence_field(setup.cost, finest->rho0, finest->rho1,
                                                       finest->plan, finest->duals, setup.hessian);
        sweep.predicted_limit = -0.5 * std::log(setup.cost.det_hessian_at_zero()) +
                                riemann_volume_entropy(finest->rho1, field, dim);
        sweep.boundary_mass = field.boundary_mass;
    }

    std::vector<std::pair<double, double>> pts;
    for (const GapRow& r : sweep.rows)
        if (r.ok) pts.emplace_back(r.h, r.gap);
    if (pts.size() >= 3) sweep.extrapolated_limit = extrapolate_limit(pts);
    return sweep;
}

} // namespace entot
