#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "entot/experiments.hpp"

using namespace entot;
using Catch::Approx;

namespace {

struct TempConfig {
    std::string path;
    explicit TempConfig(const std::string& text) {
        static int counter = 0;
        path = "/tmp/entot_test_cfg_" + std::to_string(counter++) + ".cfg";
        std::ofstream out(path);
        out << text;
    }
    ~TempConfig() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("key-value parsing") {
    std::istringstream in("# comment line\n"
                          "problem.kind = euclid\n"
                          "sweep.h = [0.04, 0.02, 0.01]\n"
                          "grid.factor = 5.0   # trailing comment\n"
                          "name = \"quoted value\"\n");
    auto cfg = KeyValueConfig::parse(in);
    REQUIRE(cfg.get_string("problem.kind") == "euclid");
    REQUIRE(cfg.get_double("grid.factor") == Approx(5.0));
    REQUIRE(cfg.get_string("name") == "quoted value");
    REQUIRE(cfg.get_double_list("sweep.h").size() == 3);
    REQUIRE(cfg.line_of("sweep.h") == 3);
    REQUIRE(cfg.get_int("missing.int", 7) == 7);
    REQUIRE_FALSE(cfg.has("nope"));
}

TEST_CASE("parse errors carry line numbers") {
    {
        std::istringstream in("a = 1\nbroken line\n");
        REQUIRE_THROWS_MATCHES(KeyValueConfig::parse(in), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("line 2")));
    }
    {
        std::istringstream in("x = 1\nx = 2\n");
        REQUIRE_THROWS_AS(KeyValueConfig::parse(in), ConfigError);
    }
    {
        std::istringstream in("v = 1.2.3\n");
        auto cfg = KeyValueConfig::parse(in);
        REQUIRE_THROWS_MATCHES(cfg.get_double("v"), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("line 1")));
    }
    {
        std::istringstream in("problem.kind = euclid\nsweep.h = [0.01, 0.02]\n");
        auto cfg = KeyValueConfig::parse(in);
        REQUIRE_THROWS_MATCHES(parse_h_list(cfg), ConfigError,
                               Catch::Matchers::MessageMatches(
                                   Catch::Matchers::ContainsSubstring("line 2")));
    }
}

TEST_CASE("euclid setup construction") {
    std::istringstream in("problem.kind = euclid\n"
                          "problem.dim = 1\n"
                          "density0.kind = uniform-box\n"
                          "density0.box = [0, 1]\n"
                          "density1.kind = uniform-box\n"
                          "density1.box = [0, 2]\n"
                          "cost.kind = quadratic\n"
                          "sweep.h = [0.1, 0.05]\n");
    auto cfg = KeyValueConfig::parse(in);
    auto setup = build_euclid_setup(cfg);
    REQUIRE(setup.cost.dim == 1);
    REQUIRE(setup.cost.truncation_radius == Approx(8.0));
    REQUIRE(setup.box1.hi[0] == Approx(2.0));
    REQUIRE(setup.rule.metric_scale == Approx(1.0));

    std::istringstream bad_cost("problem.kind = euclid\n"
                                "density0.kind = uniform-box\n"
                                "density0.box = [0, 1]\n"
                                "density1.kind = uniform-box\n"
                                "density1.box = [0, 2]\n"
                                "cost.kind = scaled-quadratic\n"
                                "cost.matrix = [-4]\n");
    auto cfg_bad = KeyValueConfig::parse(bad_cost);
    REQUIRE_THROWS_AS(build_euclid_setup(cfg_bad), ConfigError);
}

TEST_CASE("dirichlet setup construction rejects unsupported n") {
    std::istringstream in("problem.kind = dirichlet\n"
                          "dirichlet.n = 5\n"
                          "density0.kind = uniform-box\n"
                          "density0.box = [0.35, 0.65]\n"
                          "density1.kind = translate\n"
                          "density1.shift = [0.58, 0.42]\n"
                          "sweep.h = [0.01, 0.005]\n");
    auto cfg = KeyValueConfig::parse(in);
    REQUIRE_THROWS_MATCHES(build_dirichlet_setup(cfg), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("unsupported n")));
}

TEST_CASE("euclid runner produces a stable CSV") {
    TempConfig cfg("problem.kind = euclid\n"
                   "density0.kind = uniform-box\n"
                   "density0.box = [0, 1]\n"
                   "density1.kind = uniform-box\n"
                   "density1.box = [0, 2]\n"
                   "cost.kind = quadratic\n"
                   "grid.base_resolution = 16\n"
                   "sweep.h = [0.2, 0.1, 0.05]\n");
    std::ostringstream out1, out2;
    REQUIRE(run_euclid_sweep(cfg.path, out1, false) == 0);
    REQUIRE(run_euclid_sweep(cfg.path, out2, false) == 0);
    REQUIRE(out1.str() == out2.str()); // byte-identical reruns
    REQUIRE(out1.str().rfind("h,w_g,kh,kh_prime,gap,corrected_gap_prime,predicted_limit,"
                             "extrapolated_limit\n",
                             0) == 0);
    REQUIRE(std::count(out1.str().begin(), out1.str().end(), '\n') == 4);
}

TEST_CASE("bridge runner emits the diagnostic columns") {
    TempConfig cfg("problem.kind = bridge\n"
                   "density0.kind = uniform-box\n"
                   "density0.box = [0, 1]\n"
                   "density1.kind = uniform-box\n"
                   "density1.box = [0, 1]\n"
                   "cost.kind = quadratic\n"
                   "grid.base_resolution = 32\n"
                   "sweep.h = [0.01, 0.004]\n");
    std::ostringstream out;
    REQUIRE(run_bridge_check(cfg.path, out, false) == 0);
    REQUIRE(out.str().rfind("h,lambda_ratio,mean_lambda_tilde_ratio,z_integral,sup_error,"
                            "f2h_entropy,f2h_row_error,f2h_col_error,predicted_z_limit\n",
                            0) == 0);
}

TEST_CASE("dirichlet runner emits the gap columns") {
    TempConfig cfg("problem.kind = dirichlet\n"
                   "dirichlet.n = 2\n"
                   "density0.kind = uniform-box\n"
                   "density0.box = [0.35, 0.65]\n"
                   "density1.kind = translate\n"
                   "density1.shift = [0.58, 0.42]\n"
                   "grid.base_resolution = 16\n"
                   "sweep.h = [0.01, 0.005, 0.0025]\n");
    std::ostringstream out;
    REQUIRE(run_dirichlet_sweep(cfg.path, out, false) == 0);
    REQUIRE(out.str().rfind("h,n,multiplier,c_cost,kh,kh_prime,gap,predicted_limit,"
                            "extrapolated_limit\n",
                            0) == 0);
    REQUIRE(std::count(out.str().begin(), out.str().end(), '\n') == 4);
}

TEST_CASE("csv numbers use 12 significant digits") {
    REQUIRE(csv::format(1.0 / 3.0) == "0.333333333333");
    REQUIRE(csv::format(-0.346573590280) == "-0.34657359028");
    REQUIRE(csv::format(2.0) == "2");
}
