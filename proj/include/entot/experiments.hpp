#pragma once

#include <Eigen/Dense>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "entot/bridge.hpp"
#include "entot/config.hpp"
#include "entot/csv.hpp"
#include "entot/simplex.hpp"
#include "entot/sinkhorn.hpp"

// Config-file interpretation shared by the CLI and the test suites, plus the
// CSV emitters for the three experiment kinds.

namespace entot {

inline Box parse_box(const KeyValueConfig& cfg, const std::string& key, int dim) {
    std::vector<double> v = cfg.get_double_list(key);
    if (dim == 1) {
        if (v.size() != 2) throw ConfigError("key '" + key + "' needs [lo, hi]", cfg.line_of(key));
        if (!(v[0] < v[1]))
            throw ConfigError("key '" + key + "' needs lo < hi", cfg.line_of(key));
        return Box::interval(v[0], v[1]);
    }
    if (v.size() != 4)
        throw ConfigError("key '" + key + "' needs [lox, hix, loy, hiy]", cfg.line_of(key));
    if (!(v[0] < v[1]) || !(v[2] < v[3]))
        throw ConfigError("key '" + key + "' needs lo < hi per axis", cfg.line_of(key));
    return Box::rect(v[0], v[1], v[2], v[3]);
}

inline DensityDescriptor parse_density(const KeyValueConfig& cfg, const std::string& prefix,
                                       int dim) {
    const std::string kind = cfg.get_string(prefix + ".kind");
    if (kind == "uniform-box") {
        return DensityDescriptor::uniform_box(parse_box(cfg, prefix + ".box", dim));
    }
    if (kind == "truncated-gaussian") {
        std::vector<double> mean = cfg.get_double_list(prefix + ".mean");
        if (static_cast<int>(mean.size()) != dim)
            throw ConfigError("key '" + prefix + ".mean' has wrong dimension",
                              cfg.line_of(prefix + ".mean"));
        double var = cfg.get_double(prefix + ".variance");
        if (var <= 0.0)
            throw ConfigError("key '" + prefix + ".variance' must be positive",
                              cfg.line_of(prefix + ".variance"));
        Point m{mean[0], dim == 2 ? mean[1] : 0.0};
        return DensityDescriptor::truncated_gaussian(dim, m, var);
    }
    if (kind == "smooth-bump") {
        return DensityDescriptor::smooth_bump(parse_box(cfg, prefix + ".box", dim));
    }
    if (kind == "mixture") {
        if (dim != 1)
            throw ConfigError("mixture densities are one-dimensional in configs",
                              cfg.line_of(prefix + ".kind"));
        std::vector<double> w = cfg.get_double_list(prefix + ".weights");
        std::vector<double> means = cfg.get_double_list(prefix + ".means");
        std::vector<double> vars = cfg.get_double_list(prefix + ".variances");
        if (w.size() != means.size() || w.size() != vars.size())
            throw ConfigError("mixture weights/means/variances differ in length",
                              cfg.line_of(prefix + ".weights"));
        std::vector<DensityDescriptor> comps;
        for (size_t k = 0; k < w.size(); ++k) {
            if (vars[k] <= 0.0)
                throw ConfigError("mixture variance must be positive",
                                  cfg.line_of(prefix + ".variances"));
            comps.push_back(
                DensityDescriptor::truncated_gaussian(1, Point{means[k], 0.0}, vars[k]));
        }
        return DensityDescriptor::mixture(w, comps);
    }
    throw ConfigError("unknown density kind '" + kind + "'", cfg.line_of(prefix + ".kind"));
}

inline ConvexCost parse_cost(const KeyValueConfig& cfg, int dim, const Box& box0,
                             const Box& box1) {
    const std::string kind = cfg.get_string("cost.kind");
    double radius = cfg.get_double("cost.radius", default_truncation_radius(box0, box1));
    if (radius <= 0.0)
        throw ConfigError("key 'cost.radius' must be positive", cfg.line_of("cost.radius"));
    if (kind == "quadratic") return quadratic_cost(dim, radius);
    if (kind == "cosh-sum") return cosh_sum_cost(dim, radius);
    if (kind == "scaled-quadratic") {
        std::vector<double> mv = cfg.get_double_list("cost.matrix");
        Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
        if (dim == 1) {
            if (mv.size() != 1)
                throw ConfigError("key 'cost.matrix' needs one entry in 1-D",
                                  cfg.line_of("cost.matrix"));
            M(0, 0) = mv[0];
        } else {
            if (mv.size() != 4)
                throw ConfigError("key 'cost.matrix' needs four entries in 2-D",
                                  cfg.line_of("cost.matrix"));
            M << mv[0], mv[1], mv[2], mv[3];
        }
        try {
            return scaled_quadratic_cost(M, dim, radius);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what(), cfg.line_of("cost.matrix"));
        }
    }
    throw ConfigError("unknown cost kind '" + kind + "'", cfg.line_of("cost.kind"));
}

inline std::vector<double> parse_h_list(const KeyValueConfig& cfg) {
    std::vector<double> h = cfg.get_double_list("sweep.h");
    for (size_t k = 0; k < h.size(); ++k) {
        if (h[k] <= 0.0)
            throw ConfigError("key 'sweep.h' must contain positive values", cfg.line_of("sweep.h"));
        if (k > 0 && !(h[k] < h[k - 1]))
            throw ConfigError("key 'sweep.h' must be strictly decreasing", cfg.line_of("sweep.h"));
    }
    return h;
}

inline SweepSetup build_euclid_setup(const KeyValueConfig& cfg) {
    const int dim = cfg.get_int("problem.dim", 1);
    if (dim != 1 && dim != 2)
        throw ConfigError("key 'problem.dim' must be 1 or 2", cfg.line_of("problem.dim"));
    SweepSetup setup;
    setup.desc0 = parse_density(cfg, "density0", dim);
    setup.desc1 = parse_density(cfg, "density1", dim);
    setup.box0 = cfg.has("grid.box0") ? parse_box(cfg, "grid.box0", dim) : setup.desc0.support;
    setup.box1 = cfg.has("grid.box1") ? parse_box(cfg, "grid.box1", dim) : setup.desc1.support;
    if (setup.box0.dim != dim || setup.box1.dim != dim)
        throw ConfigError("grid boxes disagree with problem.dim", cfg.line_of("problem.dim"));
    setup.cost = parse_cost(cfg, dim, setup.box0, setup.box1);
    setup.rule.base = cfg.get_int("grid.base_resolution", 32);
    setup.rule.factor = cfg.get_double("grid.factor", 5.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(setup.cost.hessian_at_zero);
    setup.rule.metric_scale =
        std::sqrt(dim == 1 ? setup.cost.hessian_at_zero(0, 0) : es.eigenvalues().maxCoeff());
    setup.sinkhorn.tol = cfg.get_double("sinkhorn.tol", 1e-9);
    setup.sinkhorn.max_iter = cfg.get_int("sinkhorn.max_iter", 100000);
    return setup;
}

inline DirichletSetup build_dirichlet_setup(const KeyValueConfig& cfg) {
    const int n = cfg.get_int("dirichlet.n");
    if (n < 2 || n > 3)
        throw ConfigError("unsupported n (supported: n = 2 and 3)", cfg.line_of("dirichlet.n"));
    DirichletSetup setup;
    setup.n = n;
    if (cfg.get_string("density0.kind") != "uniform-box")
        throw ConfigError("density0.kind must be 'uniform-box' on the simplex",
                          cfg.line_of("density0.kind"));
    setup.chart_box0 = parse_box(cfg, "density0.box", n - 1);
    setup.density0 = simplex_uniform_box(setup.chart_box0);

    const std::string kind1 = cfg.get_string("density1.kind");
    if (kind1 == "uniform-box") {
        setup.chart_box1 = parse_box(cfg, "density1.box", n - 1);
        setup.density1 = simplex_uniform_box(setup.chart_box1);
    } else if (kind1 == "translate") {
        std::vector<double> shift = cfg.get_double_list("density1.shift");
        if (static_cast<int>(shift.size()) != n)
            throw ConfigError("key 'density1.shift' needs n entries",
                              cfg.line_of("density1.shift"));
        if (n != 2)
            throw ConfigError("translate densities are limited to n = 2",
                              cfg.line_of("density1.kind"));
        SimplexPoint a(shift);
        setup.density1 = simplex_translate(setup.density0, a);
        setup.chart_box1 = translate_chart_box(setup.chart_box0, a);
    } else {
        throw ConfigError("unknown density1.kind '" + kind1 + "'", cfg.line_of("density1.kind"));
    }
    setup.rule.base = cfg.get_int("grid.base_resolution", 16);
    setup.rule.factor = cfg.get_double("grid.factor", 5.0);
    setup.sinkhorn.tol = cfg.get_double("sinkhorn.tol", 1e-9);
    setup.sinkhorn.max_iter = cfg.get_int("sinkhorn.max_iter", 100000);
    return setup;
}

inline constexpr double kCsvNan = std::numeric_limits<double>::quiet_NaN();

inline int run_euclid_sweep(const std::string& config_path, std::ostream& out, bool verbose) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
    if (cfg.get_string("problem.kind") != "euclid")
        throw ConfigError("problem.kind must be 'euclid'", cfg.line_of("problem.kind"));
    SweepSetup setup = build_euclid_setup(cfg);
    std::vector<double> h_list = parse_h_list(cfg);

    GapSweep sweep = gap_sweep(setup, h_list);

    csv::Writer w(out);
    w.header({"h", "w_g", "kh", "kh_prime", "gap", "corrected_gap_prime", "predicted_limit",
              "extrapolated_limit"});
    bool failed = false;
    for (const GapRow& r : sweep.rows) {
        if (verbose)
            std::cerr << "h=" << r.h << " resolution=" << r.resolution
                      << " iterations=" << r.iterations << (r.ok ? "" : (" FAILED: " + r.error))
                      << "\n";
        if (!r.ok) {
            failed = true;
            w.row({r.h, kCsvNan, kCsvNan, kCsvNan, kCsvNan, kCsvNan, sweep.predicted_limit,
                   sweep.extrapolated_limit});
            continue;
        }
        w.row({r.h, r.w_g, r.kh, r.kh_prime, r.gap, r.corrected_gap_prime, sweep.predicted_limit,
               sweep.extrapolated_limit});
    }
    return failed ? 2 : 0;
}

inline int run_dirichlet_sweep(const std::string& config_path, std::ostream& out, bool verbose) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
    if (cfg.get_string("problem.kind") != "dirichlet")
        throw ConfigError("problem.kind must be 'dirichlet'", cfg.line_of("problem.kind"));
    DirichletSetup setup = build_dirichlet_setup(cfg);
    std::vector<double> h_list = parse_h_list(cfg);

    DirichletSweep sweep = theorem2_sweep(setup, h_list);

    csv::Writer w(out);
    w.header({"h", "n", "multiplier", "c_cost", "kh", "kh_prime", "gap", "predicted_limit",
              "extrapolated_limit"});
    bool failed = false;
    for (const DirichletRow& r : sweep.rows) {
        if (verbose)
            std::cerr << "h=" << r.h << " resolution=" << r.resolution
                      << " iterations=" << r.iterations << (r.ok ? "" : (" FAILED: " + r.error))
                      << "\n";
        if (!r.ok) {
            failed = true;
            w.row({r.h, double(setup.n), r.multiplier, kCsvNan, kCsvNan, kCsvNan, kCsvNan,
                   sweep.predicted_limit, sweep.extrapolated_limit});
            continue;
        }
        w.row({r.h, double(setup.n), r.multiplier, r.c_cost, r.kh, r.kh_prime, r.gap,
               sweep.predicted_limit, sweep.extrapolated_limit});
    }
    return failed ? 2 : 0;
}

inline int run_bridge_check(const std::string& config_path, std::ostream& out, bool verbose) {
    KeyValueConfig cfg = KeyValueConfig::parse_file(config_path);
    if (cfg.get_string("problem.kind") != "bridge")
        throw ConfigError("problem.kind must be 'bridge'", cfg.line_of("problem.kind"));
    SweepSetup setup = build_euclid_setup(cfg);
    std::vector<double> h_list = parse_h_list(cfg);
    const double margin = cfg.get_double("bridge.interior_margin", 0.08 * setup.box1.length(0));

    BridgeSweep sweep = bridge_sweep(setup, h_list, margin);

    csv::Writer w(out);
    w.header({"h", "lambda_ratio", "mean_lambda_tilde_ratio", "z_integral", "sup_error",
              "f2h_entropy", "f2h_row_error", "f2h_col_error", "predicted_z_limit"});
    bool failed = false;
    for (const BridgeRow& r : sweep.rows) {
        if (verbose)
            std::cerr << "h=" << r.h << " resolution=" << r.resolution
                      << (r.ok ? "" : (" FAILED: " + r.error)) << "\n";
        if (!r.ok) {
            failed = true;
            w.row({r.h, kCsvNan, kCsvNan, kCsvNan, kCsvNan, kCsvNan, kCsvNan, kCsvNan,
                   sweep.predicted_z_limit});
            continue;
        }
        w.row({r.h, r.lambda_ratio, r.mean_lambda_tilde_ratio, r.z_integral, r.sup_error,
               r.f2h_entropy, r.f2h_row_error, r.f2h_col_error, sweep.predicted_z_limit});
    }
    return failed ? 2 : 0;
}

} // namespace entot
