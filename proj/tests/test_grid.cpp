#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "entot/grid.hpp"
#include "helpers.hpp"

using namespace entot;
using Catch::Approx;

TEST_CASE("discretize uniform boxes") {
    auto u01 = discretize(DensityDescriptor::uniform_box(Box::interval(0, 1)), 100,
                          Box::interval(0, 1));
    REQUIRE(u01.size() == 100);
    for (size_t i = 0; i < u01.size(); ++i) {
        REQUIRE(u01.values[i] == Approx(1.0).epsilon(1e-12));
        REQUIRE(u01.volumes[i] == Approx(0.01).epsilon(1e-12));
    }

    auto u02 = discretize(DensityDescriptor::uniform_box(Box::interval(0, 2)), 100,
                          Box::interval(0, 2));
    for (size_t i = 0; i < u02.size(); ++i) REQUIRE(u02.values[i] == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("discretize normalizes every descriptor") {
    std::vector<DensityDescriptor> descs = {
        DensityDescriptor::uniform_box(Box::interval(0.2, 1.3)),
        DensityDescriptor::truncated_gaussian(1, {0.0, 0.0}, 1.0),
        DensityDescriptor::smooth_bump(Box::interval(-1, 1)),
        DensityDescriptor::mixture({0.3, 0.7},
                                   {DensityDescriptor::truncated_gaussian(1, {-1.0, 0.0}, 0.5),
                                    DensityDescriptor::truncated_gaussian(1, {1.0, 0.0}, 0.2)}),
    };
    std::vector<Box> boxes = {Box::interval(0, 2), Box::interval(-4, 4), Box::interval(-1, 1),
                              Box::interval(-4, 4)};
    for (size_t k = 0; k < descs.size(); ++k) {
        auto g = discretize(descs[k], 200, boxes[k]);
        REQUIRE(std::abs(g.mass() - 1.0) < 1e-10);
    }
    // 2-D as well
    auto g2 = discretize(DensityDescriptor::truncated_gaussian(2, {0.0, 0.0}, 0.5), 80,
                         Box::rect(-3, 3, -3, 3));
    REQUIRE(std::abs(g2.mass() - 1.0) < 1e-10);
    REQUIRE(g2.size() == 80 * 80);
}

TEST_CASE("discretize input validation") {
    auto u = DensityDescriptor::uniform_box(Box::interval(0, 2));
    REQUIRE_THROWS_AS(discretize(u, 1, Box::interval(0, 2)), std::invalid_argument);
    // support exceeds the grid box
    REQUIRE_THROWS_AS(discretize(u, 50, Box::interval(0, 1)), std::invalid_argument);
    auto gauss = DensityDescriptor::truncated_gaussian(1, {0.0, 0.0}, -1.0);
    REQUIRE_THROWS_AS(discretize(gauss, 50, Box::interval(-4, 4)), std::invalid_argument);
}

TEST_CASE("entropy of uniform densities is -log length") {
    for (double L : {0.5, 1.0, 2.0, 4.0}) {
        auto g = discretize(DensityDescriptor::uniform_box(Box::interval(0, L)), 128,
                            Box::interval(0, L));
        REQUIRE(entropy(g) == Approx(-std::log(L)).margin(1e-12));
    }
}

TEST_CASE("entropy of a truncated gaussian matches the closed form") {
    // differential entropy of N(0,1) is log(sqrt(2 pi e)); truncation at +-5
    // sigma changes it below 1e-5
    auto g = discretize(DensityDescriptor::truncated_gaussian(1, {0.0, 0.0}, 1.0), 400,
                        Box::interval(-5, 5));
    REQUIRE(entropy(g) == Approx(-1.4189385332).margin(1e-3));
}

TEST_CASE("relative entropy basics") {
    auto rho = discretize(DensityDescriptor::truncated_gaussian(1, {0.0, 0.0}, 1.0), 200,
                          Box::interval(-4, 4));
    REQUIRE(relative_entropy(rho, rho) == Approx(0.0).margin(1e-14));

    // H(U[0,1] | U[0,2] restricted to the shared grid) = log 2
    auto u01 = discretize(DensityDescriptor::uniform_box(Box::interval(0, 1)), 100,
                          Box::interval(0, 1));
    GridDensity half = u01;
    for (double& v : half.values) v = 0.5; // the U[0,2] density on [0,1]
    REQUIRE(relative_entropy(u01, half) == Approx(std::log(2.0)).margin(1e-12));

    GridDensity twice = rho;
    for (double& v : twice.values) v *= 2.0;
    REQUIRE(relative_entropy(rho, twice) == Approx(-std::log(2.0)).margin(1e-12));
}

TEST_CASE("relative entropy signals support violations") {
    auto u = discretize(DensityDescriptor::uniform_box(Box::interval(0, 1)), 50,
                        Box::interval(0, 1));
    GridDensity mu = u;
    mu.values[10] = 0.0;
    REQUIRE_THROWS_AS(relative_entropy(u, mu), std::domain_error);
}

TEST_CASE("relative entropy is nonnegative for probability pairs") {
    testutil::rng(2024);
    auto base = discretize(DensityDescriptor::uniform_box(Box::interval(0, 1)), 50,
                           Box::interval(0, 1));
    for (int trial = 0; trial < 1000; ++trial) {
        GridDensity a = base, b = base;
        double sa = 0.0, sb = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            a.values[i] = testutil::uniform(0.05, 1.0);
            b.values[i] = testutil::uniform(0.05, 1.0);
            sa += a.values[i] * a.volumes[i];
            sb += b.values[i] * b.volumes[i];
        }
        for (size_t i = 0; i < a.size(); ++i) {
            a.values[i] /= sa;
            b.values[i] /= sb;
        }
        REQUIRE(relative_entropy(a, b) >= -1e-12);
    }
}

TEST_CASE("entropy converges under grid refinement for smooth descriptors") {
    auto desc = DensityDescriptor::truncated_gaussian(1, {0.0, 0.0}, 0.7);
    Box box = Box::interval(-4, 4);
    double prev_gap = kInf;
    for (int res : {25, 50, 100, 200}) {
        double e1 = entropy(discretize(desc, res, box));
        double e2 = entropy(discretize(desc, 2 * res, box));
        double gap = std::abs(e2 - e1);
        REQUIRE(gap < prev_gap);
        prev_gap = gap;
    }
}

TEST_CASE("grid density CSV dump") {
    auto g = discretize(DensityDescriptor::uniform_box(Box::interval(0, 1)), 10,
                        Box::interval(0, 1));
    std::ostringstream os;
    g.dump_csv(os);
    std::string text = os.str();
    REQUIRE(text.rfind("x0,volume,value\n", 0) == 0);
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 11);
}

TEST_CASE("nearest node lookup") {
    auto g = discretize(DensityDescriptor::uniform_box(Box::interval(0, 1)), 10,
                        Box::interval(0, 1));
    REQUIRE(g.nearest_node({0.55, 0.0}) == 5);
    REQUIRE(g.nearest_node({-3.0, 0.0}) == 0);
    REQUIRE(g.nearest_node({9.0, 0.0}) == 9);
}
