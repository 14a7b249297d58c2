#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "bsdelab/pseudo_pde.hpp"
#include "bsdelab/quadrature.hpp"
#include "bsdelab/verification.hpp"

using namespace bsdelab;

TEST_CASE("oracle values at pinned points") {
    auto heat = Oracle::heat(1.0, 1.0);
    CHECK(oracle_value(heat, 1.0, 0.7) == Catch::Approx(0.49).margin(1e-15));  // terminal: x^2
    CHECK(oracle_value(heat, 0.0, 0.0) == 1.0);                                // x^2 + (T - t)

    auto ode = Oracle::linear_ode(-1.0, 1.0, 1.0);
    CHECK(oracle_value(ode, 0.0, 0.0) == Catch::Approx(0.36787944117144233).margin(1e-15));
    CHECK(oracle_value(ode, 1.0, 3.0) == 1.0);
}

TEST_CASE("gaussian moment oracles agree with quadrature over the normal law") {
    // Independent route: E[(x + sigma sqrt(tau) Z)^p] by Gauss-Hermite.
    const double sigma = 0.8, tau = 0.6, x = 0.4;
    auto rule = gauss_hermite(40);
    for (int p = 1; p <= 4; ++p) {
        auto oracle = Oracle::moment(p, 1.0, sigma);
        double ref = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double y = x + std::numbers::sqrt2 * sigma * std::sqrt(tau) * rule.nodes[i];
            ref += rule.weights[i] * std::pow(y, p);
        }
        ref *= std::numbers::inv_sqrtpi;
        CHECK(oracle.value(1.0 - tau, x) == Catch::Approx(ref).margin(1e-10));
    }
}

TEST_CASE("every shipped oracle has vanishing classical residual") {
    std::vector<StartNode> nodes;
    for (double s : {0.0, 0.3, 0.9})
        for (double x : {-1.2, 0.0, 0.8}) nodes.push_back({s, {x}});

    auto check_oracle = [&](const Oracle& o) {
        auto model = ForwardModel::brownian(Clock::linear(o.horizon, 10), 1,
                                            DiffusionCoeffs::scalar(0.0, o.sigma));
        auto field = classical_residual(o.as_test_function(), model, o.driver(), nodes);
        CHECK(field.max_abs_residual <= 1e-6);
        CHECK(field.terminal_gap <= 1e-12);
    };
    check_oracle(Oracle::heat(1.0, 1.0));
    check_oracle(Oracle::linear_ode(-1.0, 1.0, 1.0));
    check_oracle(Oracle::linear_ode(0.7, 2.0, 1.0));
    for (int p = 1; p <= 4; ++p) check_oracle(Oracle::moment(p, 1.0, 1.1));
}

TEST_CASE("statistical_compare gates as specified") {
    std::vector<double> truths{1.0};

    std::vector<Estimate> exact{{1.0, 0.1}};
    CHECK(statistical_compare(exact, truths, 0.0).pass);

    std::vector<Estimate> far{{2.0, 0.1}};  // 10 SE away
    auto rep = statistical_compare(far, truths, 0.0);
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_z == Catch::Approx(10.0));

    std::vector<Estimate> boundary{{1.25, 0.0}};  // exactly at the budget
    CHECK(statistical_compare(boundary, truths, 0.25).pass);

    std::vector<Estimate> three_se{{1.3, 0.1}};  // exactly 3 SE, inclusive
    CHECK(statistical_compare(three_se, truths, 0.0).pass);

    std::vector<double> wrong_len{1.0, 2.0};
    CHECK_THROWS_AS(statistical_compare(exact, wrong_len, 0.0), alignment_error);
    CHECK_THROWS_AS(statistical_compare(exact, truths, -1.0), domain_error);
}
