#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "entot/grid.hpp"
#include "entot/sinkhorn.hpp"

// The simplex group algebra, the Dirichlet cost and kernels, exponential
// coordinates, portfolio maps and L-divergence, Haar entropy Ent_0, and the
// Dirichlet-transport gap sweep.

namespace entot {

struct SimplexPoint {
    std::vector<double> p;

    SimplexPoint() = default;
    explicit SimplexPoint(std::vector<double> coords) : p(std::move(coords)) {
        double s = 0.0;
        for (double x : p) {
            if (!(x > 0.0)) throw std::invalid_argument("SimplexPoint: coordinates must be positive");
            s += x;
        }
        for (double& x : p) x /= s;
    }

    int n() const { return static_cast<int>(p.size()); }
    double operator[](size_t i) const { return p[i]; }
};

inline SimplexPoint barycenter(int n) {
    return SimplexPoint(std::vector<double>(n, 1.0 / n));
}

// (p (.) q)_i = p_i q_i / sum_j p_j q_j
inline SimplexPoint simplex_mul(const SimplexPoint& a, const SimplexPoint& b) {
    std::vector<double> r(a.p.size());
    for (size_t i = 0; i < r.size(); ++i) r[i] = a.p[i] * b.p[i];
    return SimplexPoint(std::move(r));
}

inline SimplexPoint simplex_inv(const SimplexPoint& a) {
    std::vector<double> r(a.p.size());
    for (size_t i = 0; i < r.size(); ++i) r[i] = 1.0 / a.p[i];
    return SimplexPoint(std::move(r));
}

// c(p, q) = log((1/n) sum q_i/p_i) - (1/n) sum log(q_i/p_i) = H(e-bar | q (.) p^-1)
inline double dirichlet_cost(const SimplexPoint& p, const SimplexPoint& q) {
    const int n = p.n();
    double mean = 0.0, logmean = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = q.p[i] / p.p[i];
        mean += r;
        logmean += std::log(r);
    }
    return std::log(mean / n) - logmean / n;
}

// exponential coordinates: theta_i = log(p_i / p_n), i < n
inline std::vector<double> exp_coords(const SimplexPoint& p) {
    const int n = p.n();
    std::vector<double> theta(n - 1);
    for (int i = 0; i < n - 1; ++i) theta[i] = std::log(p.p[i] / p.p[n - 1]);
    return theta;
}

inline SimplexPoint exp_coords_inv(const std::vector<double>& theta) {
    std::vector<double> p(theta.size() + 1);
    double mx = 0.0;
    for (double t : theta) mx = std::max(mx, t);
    double denom = std::exp(-mx);
    for (size_t i = 0; i < theta.size(); ++i) denom += std::exp(theta[i] - mx);
    for (size_t i = 0; i < theta.size(); ++i) p[i] = std::exp(theta[i] - mx) / denom;
    p[theta.size()] = std::exp(-mx) / denom;
    return SimplexPoint(std::move(p));
}

// the cost in exponential coordinates; equals dirichlet_cost(p, q) with
// theta = Theta(p), rho = Theta(q)
inline double cost_in_coords(const std::vector<double>& theta, const std::vector<double>& rho) {
    const int n = static_cast<int>(theta.size()) + 1;
    double mx = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) mx = std::max(mx, rho[i] - theta[i]);
    double s = std::exp(-mx);
    double lin = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        s += std::exp(rho[i] - theta[i] - mx);
        lin += rho[i] - theta[i];
    }
    return mx + std::log(s / n) - lin / n;
}

// log of Gamma(lambda) n^-lambda / Gamma(lambda/n)^n
inline double log_dirichlet_norm(double lambda, int n) {
    return std::lgamma(lambda) - lambda * std::log(static_cast<double>(n)) -
           n * std::lgamma(lambda / n);
}

// symmetric Dirichlet(lambda/n, ..., lambda/n) density w.r.t. Lebesgue
// measure on the first n-1 coordinates
inline double diri_density(double lambda, const SimplexPoint& p) {
    const int n = p.n();
    double logp = std::lgamma(lambda) - n * std::lgamma(lambda / n);
    for (int i = 0; i < n; ++i) logp += (lambda / n - 1.0) * std::log(p.p[i]);
    return std::exp(logp);
}

// Haar density nu_0(p) = prod p_i^-1 of the sigma-finite Diri(0) measure
inline double haar_density(const SimplexPoint& p) {
    double v = 1.0;
    for (double x : p.p) v /= x;
    return v;
}

inline double log_haar_density(const SimplexPoint& p) {
    double v = 0.0;
    for (double x : p.p) v -= std::log(x);
    return v;
}

// [Gamma(lambda) n^-lambda / Gamma(lambda/n)^n] / [n^{-n/2} (lambda/2pi)^{(n-1)/2}],
// which approaches 1 as lambda grows
inline double stirling_ratio(double lambda, int n) {
    const double log_asym = -0.5 * n * std::log(static_cast<double>(n)) +
                            0.5 * (n - 1) * std::log(lambda / (2.0 * M_PI));
    return std::exp(log_dirichlet_norm(lambda, n) - log_asym);
}

// f_h(p, q) = F_{1/h}(p, q), the transition density of p (.) G_h for
// G_h ~ Diri(1/h); evaluated fully in log space
inline double log_dirichlet_kernel(double h, const SimplexPoint& p, const SimplexPoint& q) {
    return log_dirichlet_norm(1.0 / h, p.n()) + log_haar_density(q) - dirichlet_cost(p, q) / h;
}

inline double dirichlet_kernel(double h, const SimplexPoint& p, const SimplexPoint& q) {
    return std::exp(log_dirichlet_kernel(h, p, q));
}

// Exponentially concave function on the simplex. The gradient is an ambient
// n-vector; only its pairings with tangent directions e_i - r are used.
struct ExpConcaveFn {
    std::string name;
    std::function<double(const SimplexPoint&)> evaluate;
    std::function<std::vector<double>(const SimplexPoint&)> gradient;
};

// phi(p) = (1/n) sum log p_i, the geometric-mean potential
inline ExpConcaveFn geometric_mean_phi() {
    ExpConcaveFn f;
    f.name = "geometric-mean";
    f.evaluate = [](const SimplexPoint& p) {
        double s = 0.0;
        for (double x : p.p) s += std::log(x);
        return s / p.n();
    };
    f.gradient = [](const SimplexPoint& p) {
        std::vector<double> g(p.p.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = 1.0 / (p.n() * p.p[i]);
        return g;
    };
    return f;
}

inline ExpConcaveFn zero_phi() {
    ExpConcaveFn f;
    f.name = "zero";
    f.evaluate = [](const SimplexPoint&) { return 0.0; };
    f.gradient = [](const SimplexPoint& p) { return std::vector<double>(p.p.size(), 0.0); };
    return f;
}

// phi(p) = log <w, p> for positive weights w (e^phi is linear, hence concave)
inline ExpConcaveFn log_affine_phi(std::vector<double> w) {
    ExpConcaveFn f;
    f.name = "log-affine";
    f.evaluate = [w](const SimplexPoint& p) {
        double s = 0.0;
        for (size_t i = 0; i < w.size(); ++i) s += w[i] * p.p[i];
        return std::log(s);
    };
    f.gradient = [w](const SimplexPoint& p) {
        double s = 0.0;
        for (size_t i = 0; i < w.size(); ++i) s += w[i] * p.p[i];
        std::vector<double> g(w.size());
        for (size_t i = 0; i < w.size(); ++i) g[i] = w[i] / s;
        return g;
    };
    return f;
}

// pi_i(r) = r_i (1 + <grad phi(r), e_i - r>), a point of the closed simplex
inline std::vector<double> portfolio_map(const ExpConcaveFn& phi, const SimplexPoint& r) {
    const std::vector<double> g = phi.gradient(r);
    double gr = 0.0;
    for (size_t i = 0; i < g.size(); ++i) gr += g[i] * r.p[i];
    std::vector<double> pi(g.size());
    for (size_t i = 0; i < g.size(); ++i) pi[i] = r.p[i] * (1.0 + g[i] - gr);
    return pi;
}

// L[r | q] = log(sum_i pi_i(q) r_i / q_i) - (phi(r) - phi(q)) >= 0
inline double l_divergence(const ExpConcaveFn& phi, const SimplexPoint& r, const SimplexPoint& q) {
    const std::vector<double> pi = portfolio_map(phi, q);
    double s = 0.0;
    for (size_t i = 0; i < pi.size(); ++i) s += pi[i] * r.p[i] / q.p[i];
    return std::log(s) - (phi.evaluate(r) - phi.evaluate(q));
}

namespace detail {

inline SimplexPoint lift_chart(const std::vector<double>& chart) {
    std::vector<double> p(chart.size() + 1);
    double s = 0.0;
    for (size_t i = 0; i < chart.size(); ++i) {
        p[i] = chart[i];
        s += chart[i];
    }
    p[chart.size()] = 1.0 - s;
    return SimplexPoint(std::move(p));
}

} // namespace detail

// L(q) = -(grad^2 phi + grad phi grad phi^T) by central differences in the
// (p_1 .. p_{n-1}) chart, embedded with a zero last row/column.
inline Eigen::MatrixXd l_matrix(const ExpConcaveFn& phi, const SimplexPoint& q,
                                double step = 1e-4) {
    const int n = q.n();
    const int d = n - 1;
    std::vector<double> chart(q.p.begin(), q.p.end() - 1);

    auto eval = [&](const std::vector<double>& c) { return phi.evaluate(detail::lift_chart(c)); };

    Eigen::MatrixXd H(d, d);
    const double f0 = eval(chart);
    for (int a = 0; a < d; ++a) {
        std::vector<double> cp = chart, cm = chart;
        cp[a] += step;
        cm[a] -= step;
        H(a, a) = (eval(cp) - 2.0 * f0 + eval(cm)) / (step * step);
        for (int b = a + 1; b < d; ++b) {
            std::vector<double> cpp = chart, cpm = chart, cmp = chart, cmm = chart;
            cpp[a] += step; cpp[b] += step;
            cpm[a] += step; cpm[b] -= step;
            cmp[a] -= step; cmp[b] += step;
            cmm[a] -= step; cmm[b] -= step;
            H(a, b) = H(b, a) =
                (eval(cpp) - eval(cpm) - eval(cmp) + eval(cmm)) / (4.0 * step * step);
        }
    }
    const std::vector<double> g = phi.gradient(q);
    Eigen::VectorXd gc(d); // chart gradient: pairings with e_a - e_n
    for (int a = 0; a < d; ++a) gc(a) = g[a] - g[n - 1];

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    L.topLeftCorner(d, d) = -(H + gc * gc.transpose());
    return L;
}

// S^T L(q) S with S = [I; -1^T]; must be positive semidefinite for an
// exponentially concave phi
inline Eigen::MatrixXd l_matrix_reduced(const ExpConcaveFn& phi, const SimplexPoint& q,
                                        double step = 1e-4, double tol = 1e-6) {
    const int n = q.n();
    Eigen::MatrixXd L = l_matrix(phi, q, step);
    Eigen::MatrixXd R = L.topLeftCorner(n - 1, n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
    if (es.eigenvalues().minCoeff() < -tol)
        throw SolveError("l_matrix_reduced: indefinite result beyond tolerance");
    return R;
}

// Density on the open simplex, discretized over a box in the first n-1
// coordinates. All integrals are chart-Lebesgue, matching the paper's global
// coordinate convention.
struct SimplexGrid {
    int n = 2;
    GridDensity chart;                // nodes are chart coordinates
    std::vector<SimplexPoint> points; // lifted nodes

    size_t size() const { return chart.size(); }
};

struct SimplexDensity {
    std::function<double(const std::vector<double>&)> value; // on chart coords
};

inline SimplexDensity simplex_uniform_box(const Box& chart_box) {
    SimplexDensity d;
    d.value = [chart_box](const std::vector<double>& c) {
        Point p{c[0], c.size() > 1 ? c[1] : 0.0};
        return chart_box.contains(p) ? 1.0 : 0.0;
    };
    return d;
}

// Pushforward of `base` under p -> p (.) a; the Jacobian of the inverse
// translation is nu_0(q) / nu_0(p), so Haar mass is preserved.
inline SimplexDensity simplex_translate(const SimplexDensity& base, const SimplexPoint& shift) {
    SimplexPoint ainv = simplex_inv(shift);
    SimplexDensity d;
    d.value = [base, ainv](const std::vector<double>& c) {
        SimplexPoint q = detail::lift_chart(c);
        SimplexPoint p = simplex_mul(q, ainv);
        std::vector<double> pc(p.p.begin(), p.p.end() - 1);
        double jac = 1.0;
        for (int i = 0; i < q.n(); ++i) jac *= p.p[i] / q.p[i];
        return base.value(pc) * jac;
    };
    return d;
}

// chart image of a chart box under p -> p (.) a (n = 2 only: the map is a
// monotone Moebius transform of the chart coordinate)
inline Box translate_chart_box(const Box& box, const SimplexPoint& shift) {
    if (shift.n() != 2)
        throw std::invalid_argument("translate_chart_box: only n = 2 boxes map to boxes");
    auto map = [&](double t) {
        double num = t * shift.p[0];
        return num / (num + (1.0 - t) * shift.p[1]);
    };
    return Box::interval(map(box.lo[0]), map(box.hi[0]));
}

inline SimplexGrid discretize_simplex(const SimplexDensity& density, int n, const Box& chart_box,
                                      int resolution) {
    if (n < 2 || n > 3) throw std::invalid_argument("discretize_simplex: n must be 2 or 3");
    if (chart_box.dim != n - 1)
        throw std::invalid_argument("discretize_simplex: chart box dimension must be n - 1");
    SimplexGrid g;
    g.n = n;
    GridDensity& chart = g.chart;
    chart.dim = n - 1;
    chart.box = chart_box;
    chart.shape = {resolution, n == 3 ? resolution : 1};
    const int nx = chart.shape[0], ny = chart.shape[1];
    const double dx = chart_box.length(0) / nx;
    const double dy = n == 3 ? chart_box.length(1) / ny : 1.0;
    const double vol = n == 3 ? dx * dy : dx;
    const double margin = std::min(dx, dy); // nodes stay one cell inside the open simplex

    double total = 0.0;
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            Point node{chart_box.lo[0] + (i + 0.5) * dx,
                       n == 3 ? chart_box.lo[1] + (j + 0.5) * dy : 0.0};
            std::vector<double> c(n - 1);
            c[0] = node[0];
            if (n == 3) c[1] = node[1];
            double tail = 1.0 - std::accumulate(c.begin(), c.end(), 0.0);
            for (double x : c)
                if (x < margin) throw std::invalid_argument("discretize_simplex: node outside the interior margin");
            if (tail < margin)
                throw std::invalid_argument("discretize_simplex: node outside the interior margin");
            double v = density.value(c);
            if (v < 0.0) throw std::invalid_argument("discretize_simplex: negative density");
            chart.nodes.push_back(node);
            chart.volumes.push_back(vol);
            chart.values.push_back(v);
            g.points.push_back(detail::lift_chart(c));
            total += v * vol;
        }
    }
    if (total <= 0.0) throw std::invalid_argument("discretize_simplex: density vanishes on the box");
    for (double& v : chart.values) v /= total;
    return g;
}

// Ent_0(rho) = int rho log(rho / nu_0)
inline double ent0(const SimplexGrid& g) {
    double s = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        const double v = g.chart.values[i];
        if (v <= 0.0) continue;
        s += v * (std::log(v) - log_haar_density(g.points[i])) * g.chart.volumes[i];
    }
    return s;
}

inline Eigen::MatrixXd dirichlet_cost_matrix(const SimplexGrid& g0, const SimplexGrid& g1) {
    Eigen::MatrixXd C(static_cast<Eigen::Index>(g0.size()), static_cast<Eigen::Index>(g1.size()));
    for (size_t i = 0; i < g0.size(); ++i)
        for (size_t j = 0; j < g1.size(); ++j)
            C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                dirichlet_cost(g0.points[i], g1.points[j]);
    return C;
}

// sqrt of the largest chart-Hessian eigenvalue of q -> c(p, q) at q = p,
// sampled over the support; sets the metric scale of the sqrt(h) grid rule
inline double cost_metric_scale(int n, const std::vector<SimplexPoint>& samples) {
    double worst = 0.0;
    const double s = 1e-5;
    for (const SimplexPoint& p : samples) {
        std::vector<double> chart(p.p.begin(), p.p.end() - 1);
        const int d = n - 1;
        Eigen::MatrixXd H(d, d);
        auto cost_at = [&](const std::vector<double>& c) {
            return dirichlet_cost(p, detail::lift_chart(c));
        };
        const double f0 = 0.0; // c(p, p) = 0
        for (int a = 0; a < d; ++a) {
            std::vector<double> cp = chart, cm = chart;
            cp[a] += s;
            cm[a] -= s;
            H(a, a) = (cost_at(cp) - 2.0 * f0 + cost_at(cm)) / (s * s);
            for (int b = a + 1; b < d; ++b) {
                std::vector<double> cpp = chart, cpm = chart, cmp = chart, cmm = chart;
                cpp[a] += s; cpp[b] += s;
                cpm[a] += s; cpm[b] -= s;
                cmp[a] -= s; cmp[b] += s;
                cmm[a] -= s; cmm[b] -= s;
                H(a, b) = H(b, a) =
                    (cost_at(cpp) - cost_at(cpm) - cost_at(cmp) + cost_at(cmm)) / (4.0 * s * s);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        worst = std::max(worst, es.eigenvalues().maxCoeff());
    }
    return std::sqrt(std::max(worst, 1.0));
}

struct DirichletRow {
    double h = 0.0;
    double multiplier = 0.0; // 1/h - n/2
    double c_cost = 0.0;     // exact transport cost C(rho0, rho1)
    double kh = 0.0, kh_prime = 0.0;
    double gap = 0.0;        // kh - multiplier * c_cost
    int iterations = 0;
    int resolution = 0;
    bool ok = false;
    std::string error;
};

struct DirichletSweep {
    int n = 2;
    std::vector<DirichletRow> rows;
    double predicted_limit = 0.0; // (Ent_0(rho1) - Ent_0(rho0)) / 2 by quadrature
    double extrapolated_limit = 0.0;
};

struct DirichletSetup {
    int n = 2;
    SimplexDensity density0, density1;
    Box chart_box0, chart_box1;
    ResolutionRule rule;       // metric_scale is overwritten by cost_metric_scale
    SinkhornOptions sinkhorn;
};

// Theorem 2 sweep: K_h by log-domain Sinkhorn against mu_h(p,q) =
// rho0(p) f_h(p,q), exact C(rho0, rho1) per resolution, gap rows with the
// (1/h - n/2) multiplier.
inline DirichletSweep theorem2_sweep(const DirichletSetup& setup,
                                     const std::vector<double>& h_list) {
    for (size_t k = 1; k < h_list.size(); ++k)
        if (!(h_list[k] < h_list[k - 1]))
            throw std::invalid_argument("theorem2_sweep: h_list must be strictly decreasing");
    DirichletSweep sweep;
    sweep.n = setup.n;
    const int n = setup.n;

    // metric scale sampled at the corners and center of the support boxes
    std::vector<SimplexPoint> samples;
    for (const Box* b : {&setup.chart_box0, &setup.chart_box1}) {
        std::vector<std::vector<double>> charts;
        if (n == 2)
            charts = {{b->lo[0]}, {b->hi[0]}, {0.5 * (b->lo[0] + b->hi[0])}};
        else
            charts = {{b->lo[0], b->lo[1]},
                      {b->lo[0], b->hi[1]},
                      {b->hi[0], b->lo[1]},
                      {b->hi[0], b->hi[1]},
                      {0.5 * (b->lo[0] + b->hi[0]), 0.5 * (b->lo[1] + b->hi[1])}};
        for (auto& c : charts) samples.push_back(detail::lift_chart(c));
    }
    ResolutionRule rule = setup.rule;
    rule.metric_scale = cost_metric_scale(n, samples);

    struct Solved {
        SimplexGrid g0, g1;
        Eigen::MatrixXd C;
        double c_cost = 0.0;
    };
    std::map<int, Solved> cache;

    for (double h : h_list) {
        DirichletRow row;
        row.h = h;
        row.multiplier = 1.0 / h - 0.5 * n;
        try {
            const int res = rule.resolution_for(h, std::max(setup.chart_box0.length(0),
                                                            setup.chart_box1.length(0)));
            row.resolution = res;
            auto it = cache.find(res);
            if (it == cache.end()) {
                Solved s;
                s.g0 = discretize_simplex(setup.density0, n, setup.chart_box0, res);
                s.g1 = discretize_simplex(setup.density1, n, setup.chart_box1, res);
                s.C = dirichlet_cost_matrix(s.g0, s.g1);
                CostMatrix cm;
                cm.entries = s.C;
                std::vector<double> am(s.g0.size()), bm(s.g1.size());
                for (size_t i = 0; i < am.size(); ++i)
                    am[i] = s.g0.chart.values[i] * s.g0.chart.volumes[i];
                for (size_t j = 0; j < bm.size(); ++j)
                    bm[j] = s.g1.chart.values[j] * s.g1.chart.volumes[j];
                auto [plan, duals] = solve_exact(am, bm, cm);
                s.c_cost = plan.objective;
                it = cache.emplace(res, std::move(s)).first;
            }
            const Solved& s = it->second;

            SinkhornCore core = sinkhorn_core(s.g0.chart.values, s.g0.chart.volumes,
                                              s.g1.chart.values, s.g1.chart.volumes, s.C, h,
                                              setup.sinkhorn);
            // K_h = H(pi | mu_h), mu_h(i,j) = rho0_i v_i f_h(p_i, q_j) w_j:
            // log(pi / mu_h) = phi_i + psi_j - log rho0_i - log nu0(q_j) - log F~_h
            const double log_norm = log_dirichlet_norm(1.0 / h, n);
            double kh = 0.0;
            for (Eigen::Index i = 0; i < core.plan.rows(); ++i) {
                for (Eigen::Index j = 0; j < core.plan.cols(); ++j) {
                    const double p = core.plan(i, j);
                    if (p <= 0.0) continue;
                    kh += p * (core.phi[static_cast<size_t>(i)] +
                               core.psi[static_cast<size_t>(j)] -
                               std::log(s.g0.chart.values[static_cast<size_t>(i)]) -
                               log_haar_density(s.g1.points[static_cast<size_t>(j)]) - log_norm);
                }
            }
            row.kh = kh;
            row.kh_prime = core.kh_prime;
            row.c_cost = s.c_cost;
            row.gap = kh - row.multiplier * s.c_cost;
            row.iterations = core.iterations;
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        sweep.rows.push_back(std::move(row));
    }

    // predicted limit by direct quadrature on dedicated fine grids
    {
        const int res = n == 2 ? 2000 : 200;
        SimplexGrid f0 = discretize_simplex(setup.density0, n, setup.chart_box0, res);
        SimplexGrid f1 = discretize_simplex(setup.density1, n, setup.chart_box1, res);
        sweep.predicted_limit = 0.5 * (ent0(f1) - ent0(f0));
    }

    std::vector<std::pair<double, double>> pts;
    for (const DirichletRow& r : sweep.rows)
        if (r.ok) pts.emplace_back(r.h, r.gap);
    if (pts.size() >= 3) sweep.extrapolated_limit = extrapolate_limit(pts);
    return sweep;
}

} // namespace entot
