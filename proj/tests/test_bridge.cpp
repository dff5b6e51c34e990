#include <catch2/catch_amalgamated.hpp>

#include "entot/bridge.hpp"
#include "helpers.hpp"

using namespace entot;
using Catch::Approx;

namespace {

struct BridgeInstance {
    GridDensity rho0, rho1;
    CostMatrix C;
    TransportPlan plan;
    DualPotentials duals;
    ConvexCost cost;
};

BridgeInstance solve_instance(const DensityDescriptor& d0, const Box& b0,
                              const DensityDescriptor& d1, const Box& b1, int res0, int res1,
                              const ConvexCost& cost) {
    BridgeInstance inst;
    inst.cost = cost;
    inst.rho0 = discretize(d0, res0, b0);
    inst.rho1 = discretize(d1, res1, b1);
    inst.C = cost_matrix(cost, inst.rho0.nodes, inst.rho1.nodes);
    std::vector<double> a(inst.rho0.size()), b(inst.rho1.size());
    for (size_t i = 0; i < a.size(); ++i) a[i] = inst.rho0.values[i] * inst.rho0.volumes[i];
    for (size_t j = 0; j < b.size(); ++j) b[j] = inst.rho1.values[j] * inst.rho1.volumes[j];
    auto [plan, duals] = solve_exact(a, b, inst.C);
    inst.plan = std::move(plan);
    inst.duals = std::move(duals);
    return inst;
}

BridgeInstance identity_uniform(int res, const ConvexCost& cost) {
    return solve_instance(DensityDescriptor::uniform_box(Box::interval(0, 1)),
                          Box::interval(0, 1), DensityDescriptor::uniform_box(Box::interval(0, 1)),
                          Box::interval(0, 1), res, res, cost);
}

} // namespace

TEST_CASE("tilted kernel rows integrate to one") {
    auto inst = identity_uniform(100, quadratic_cost(1, 8.0));
    for (double h : {0.01, 1000.0}) {
        auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                std::log(lambda_h(inst.cost, h)));
        REQUIRE(kern.empty_rows.empty());
        for (Eigen::Index i = 0; i < kern.rows.rows(); ++i) {
            double mass = 0.0;
            for (Eigen::Index j = 0; j < kern.rows.cols(); ++j)
                mass += kern.rows(i, j) * inst.rho1.volumes[static_cast<size_t>(j)];
            REQUIRE(mass == Approx(1.0).margin(1e-9));
        }
        // Z_h Lambda_h = Lambda~_h by construction
        for (size_t i = 0; i < inst.rho0.size(); ++i)
            REQUIRE(std::log(kern.z_values[i]) + kern.log_lambda_h ==
                    Approx(kern.log_lambda_tilde[i]).margin(1e-12));
    }
}

TEST_CASE("flat-tilt limit: huge h gives nearly uniform rows") {
    auto inst = identity_uniform(80, quadratic_cost(1, 8.0));
    auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, 1000.0,
                            std::log(lambda_h(inst.cost, 1000.0)));
    for (Eigen::Index j = 0; j < kern.rows.cols(); ++j)
        REQUIRE(kern.rows(40, j) == Approx(1.0).margin(2e-3));
}

TEST_CASE("tilted rows approach the Gaussian surrogate") {
    // identity transport: D[y|x] = (y-x)^2/2, so a row is a discretized
    // N(x, h) restricted to the support
    auto inst = identity_uniform(160, quadratic_cost(1, 8.0));
    double prev_tv = kInf;
    for (double h : {0.04, 0.01, 0.0025}) {
        auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                std::log(lambda_h(inst.cost, h)));
        const size_t i = 80; // interior source
        const double x = inst.rho0.nodes[i][0];
        double norm = 0.0;
        std::vector<double> gauss(inst.rho1.size());
        for (size_t j = 0; j < inst.rho1.size(); ++j) {
            const double y = inst.rho1.nodes[j][0];
            gauss[j] = std::exp(-0.5 * (y - x) * (y - x) / h);
            norm += gauss[j] * inst.rho1.volumes[j];
        }
        double tv = 0.0;
        for (size_t j = 0; j < inst.rho1.size(); ++j)
            tv += 0.5 * std::abs(kern.rows(static_cast<Eigen::Index>(i),
                                           static_cast<Eigen::Index>(j)) -
                                 gauss[j] / norm) *
                  inst.rho1.volumes[j];
        REQUIRE(tv < prev_tv + 1e-12);
        prev_tv = tv;
    }
    REQUIRE(prev_tv < 0.02);
}

TEST_CASE("lambda tilde ratio approaches one") {
    SECTION("identity transport, quadratic and scaled") {
        for (double m : {1.0, 4.0}) {
            Eigen::Matrix2d M = Eigen::Matrix2d::Identity();
            M(0, 0) = m;
            auto cost = scaled_quadratic_cost(M, 1, 8.0);
            auto inst = identity_uniform(300, cost);
            auto field = build_divergence_field(cost, inst.rho0, inst.rho1, inst.plan, inst.duals);
            const double h = 2e-4;
            auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                    std::log(lambda_h(cost, h)));
            double mean = mean_lambda_tilde_ratio(kern, inst.rho0, inst.rho1, field, 1);
            REQUIRE(mean == Approx(1.0).margin(0.02));
            // pointwise at a deep interior source
            const size_t i = 150;
            const size_t jimg = inst.rho1.nearest_node(field.monge_images[i]);
            REQUIRE(lambda_tilde_ratio(kern, i, field.hessians[jimg], 1) ==
                    Approx(1.0).margin(0.02));
        }
    }

    SECTION("shifted uniform instance: ratios approach 1 from below") {
        auto inst = solve_instance(DensityDescriptor::uniform_box(Box::interval(0, 1)),
                                   Box::interval(0, 1),
                                   DensityDescriptor::uniform_box(Box::interval(0, 2)),
                                   Box::interval(0, 2), 200, 400, quadratic_cost(1, 8.0));
        auto field =
            build_divergence_field(inst.cost, inst.rho0, inst.rho1, inst.plan, inst.duals);
        double prev_err = kInf;
        for (double h : {0.02, 0.01, 0.005}) {
            auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                    std::log(lambda_h(inst.cost, h)));
            double mean = mean_lambda_tilde_ratio(kern, inst.rho0, inst.rho1, field, 1);
            REQUIRE(std::abs(mean - 1.0) < prev_err);
            prev_err = std::abs(mean - 1.0);
        }
    }
}

TEST_CASE("z integral approaches the volume-measure limit") {
    SECTION("shifted uniform, quadratic: limit is log(1/2)/2") {
        auto inst = solve_instance(DensityDescriptor::uniform_box(Box::interval(0, 1)),
                                   Box::interval(0, 1),
                                   DensityDescriptor::uniform_box(Box::interval(0, 2)),
                                   Box::interval(0, 2), 450, 900, quadratic_cost(1, 8.0));
        const double h = 5e-4;
        auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                std::log(lambda_h(inst.cost, h)));
        REQUIRE(z_integral(kern, inst.rho0) == Approx(0.5 * std::log(0.5)).margin(0.02));
    }

    SECTION("identity transport: limit is zero") {
        auto inst = identity_uniform(350, quadratic_cost(1, 8.0));
        const double h = 2.5e-4;
        auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                std::log(lambda_h(inst.cost, h)));
        REQUIRE(z_integral(kern, inst.rho0) == Approx(0.0).margin(0.02));
    }

    SECTION("cosh cost cross-check against the Hessian-field pipeline") {
        auto inst = identity_uniform(350, cosh_sum_cost(1, 8.0));
        auto field =
            build_divergence_field(inst.cost, inst.rho0, inst.rho1, inst.plan, inst.duals);
        const double predicted = -0.5 * std::log(inst.cost.det_hessian_at_zero()) +
                                 riemann_volume_entropy(inst.rho1, field, 1);
        const double h = 2.5e-4;
        auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                std::log(lambda_h(inst.cost, h)));
        REQUIRE(z_integral(kern, inst.rho0) == Approx(predicted).margin(0.03));
    }
}

TEST_CASE("bridge marginal converges pointwise") {
    auto inst = identity_uniform(240, quadratic_cost(1, 8.0));
    const double margin = 0.08;
    double prev = kInf;
    for (double h : {0.04, 0.02, 0.01, 0.0025}) {
        auto kern = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                std::log(lambda_h(inst.cost, h)));
        auto marg = bridge_marginal(kern, inst.rho0, inst.rho1, margin);
        REQUIRE(marg.sup_error < prev);
        prev = marg.sup_error;
        // total mass of rho1_h is one by construction
        REQUIRE(marg.rho1_h.mass() == Approx(1.0).margin(1e-10));
        // bounded density ratio on the interior
        REQUIRE(marg.ratio_lo > 0.5);
        REQUIRE(marg.ratio_hi < 2.0);
    }
    REQUIRE(prev < 0.05); // terminal sup error well under max rho1 = 1
}

TEST_CASE("f2h coupling") {
    auto inst = identity_uniform(140, quadratic_cost(1, 8.0));

    SECTION("marginals are exact and the relative entropy shrinks") {
        double prev_H = kInf;
        for (double h : {0.04, 0.02, 0.01, 0.005}) {
            auto kh = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, h,
                                  std::log(lambda_h(inst.cost, h)));
            auto k2h = tilt_kernel(inst.duals, inst.C, inst.rho0, inst.rho1, 2.0 * h,
                                   std::log(lambda_h(inst.cost, 2.0 * h)));
            auto marg = bridge_marginal(kh, inst.rho0, inst.rho1, 0.08);
            auto diag = f2h_coupling(kh, k2h, inst.plan, inst.rho0, inst.rho1, marg);
            REQUIRE(diag.row_error <= 1e-6);
            REQUIRE(diag.col_error <= 1e-6);
            REQUIRE(diag.excluded_mass == 0.0);
            REQUIRE(diag.rel_entropy_2h >= -1e-10);
            REQUIRE(diag.rel_entropy_2h <= prev_H * 1.05 + 1e-4); // nonincreasing up to grid noise
            prev_H = diag.rel_entropy_2h;
        }
        REQUIRE(prev_H <= 0.05);
    }
}

TEST_CASE("bridge sweep runner") {
    SweepSetup setup;
    setup.desc0 = DensityDescriptor::uniform_box(Box::interval(0, 1));
    setup.desc1 = DensityDescriptor::uniform_box(Box::interval(0, 1));
    setup.box0 = setup.box1 = Box::interval(0, 1);
    setup.cost = quadratic_cost(1, 8.0);
    setup.rule.base = 32;

    auto sweep = bridge_sweep(setup, {0.01, 0.004, 0.001}, 0.08);
    REQUIRE(sweep.rows.size() == 3);
    for (const auto& row : sweep.rows) {
        REQUIRE(row.ok);
        REQUIRE(row.lambda_ratio == Approx(1.0).margin(1e-6));
        REQUIRE(row.f2h_row_error <= 1e-6);
    }
    REQUIRE(sweep.rows[2].mean_lambda_tilde_ratio == Approx(1.0).margin(0.05));
    REQUIRE(sweep.max_rho1 == Approx(1.0).epsilon(0.01));
    REQUIRE(sweep.predicted_z_limit == Approx(0.0).margin(1e-3));
}
