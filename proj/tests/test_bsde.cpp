#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bsdelab/bsde.hpp"
#include "bsdelab/measure.hpp"
#include "bsdelab/rng.hpp"

using namespace bsdelab;

namespace {

ForwardModel std_brownian(double horizon = 1.0, std::size_t steps = 20) {
    return ForwardModel::brownian(Clock::linear(horizon, steps), 1, DiffusionCoeffs::scalar(0.0, 1.0));
}

Driver zero_driver(double terminal_value) {
    return Driver{[](double, std::span<const double>, double, double) { return 0.0; },
                  [terminal_value](std::span<const double>) { return terminal_value; }, 0.0, 0.0};
}

Driver heat_driver() {
    return Driver{[](double, std::span<const double>, double, double) { return 0.0; },
                  [](std::span<const double> x) { return x[0] * x[0]; }, 0.0, 0.0};
}

Driver decay_driver() {  // f = -y, g = 1
    return Driver{[](double, std::span<const double>, double y, double) { return -y; },
                  [](std::span<const double>) { return 1.0; }, 1.0, 0.0};
}

Driver sin_cos_driver() {  // f = sin(y) + cos(z)/2, declared K_Y = K_Z = 1
    return Driver{[](double, std::span<const double>, double y, double z) {
                      return std::sin(y) + 0.5 * std::cos(z);
                  },
                  [](std::span<const double> x) { return x[0] * x[0]; }, 1.0, 1.0};
}

double mean_of(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("picard step with zero driver and constant terminal") {
    auto model = std_brownian();
    std::vector<double> x0{0.4};
    auto ens = sample_paths(model, 0.0, x0, 2000, 7);
    auto prev = BsdeIterate::zero(2000, ens.clock().nodes());
    auto it = picard_step(prev, ens, zero_driver(3.5), RegressionBasis::polynomial(1, 2), 1e-8 * 2000);
    for (std::size_t p = 0; p < 200; ++p) {
        for (std::size_t k = 0; k < ens.clock().nodes(); ++k)
            CHECK(it.y(p, k) == Catch::Approx(3.5).margin(1e-9));
        for (std::size_t c = 0; c < ens.clock().cells(); ++c) {
            CHECK(it.dm(p, c) == Catch::Approx(0.0).margin(1e-9));
            CHECK(it.zsq(p, c) == Catch::Approx(0.0).margin(1e-9));
        }
    }
    CHECK(it.iteration == 1);
}

TEST_CASE("picard step integrates a constant driver against the clock") {
    // f = 1, g = 0, V(t) = t: Y(t) = T - t for every path.
    const std::size_t steps = 10;
    auto model = std_brownian(1.0, steps);
    Driver one{[](double, std::span<const double>, double, double) { return 1.0; },
               [](std::span<const double>) { return 0.0; }, 0.0, 0.0};
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, 1000, 3);
    auto it = picard_step(BsdeIterate::zero(1000, steps + 1), ens, one,
                          RegressionBasis::polynomial(1, 2), 1e-8 * 1000);
    for (std::size_t p = 0; p < 100; ++p)
        for (std::size_t k = 0; k <= steps; ++k) {
            const double expected = 1.0 - ens.clock().time(k);
            CHECK(it.y(p, k) == Catch::Approx(expected).margin(1e-9));
        }
}

TEST_CASE("picard step reproduces the Gaussian conditional second moment") {
    const std::size_t n = 100000;
    const std::size_t steps = 20;
    auto model = std_brownian(1.0, steps);
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, n, 99);
    auto it = picard_step(BsdeIterate::zero(n, steps + 1), ens, heat_driver(),
                          RegressionBasis::polynomial(1, 2), 1e-8 * n);
    // Terminal is exact path-wise.
    for (std::size_t p = 0; p < n; p += 1013) {
        const double xT = ens.state1(p, steps);
        CHECK(it.y(p, steps) == xT * xT);
    }
    // Interior: Y ~ X_t^2 + (T - t) within a few times the fit noise.
    for (std::size_t k : {5ul, 10ul, 15ul}) {
        std::vector<double> err(n);
        for (std::size_t p = 0; p < n; ++p) {
            const double x = ens.state1(p, k);
            err[p] = it.y(p, k) - (x * x + (1.0 - ens.clock().time(k)));
        }
        CHECK(std::fabs(mean_of(err)) <= 0.02);
        CHECK(std::fabs(err[0]) <= 0.05);
    }
}

TEST_CASE("weighted norm basic values and the default lambda") {
    auto clock = Clock::linear(1.0, 10);
    auto zero = BsdeIterate::zero(4, clock.nodes());
    CHECK(weighted_norm(zero, clock, 0.0) == 0.0);

    // Y = 1, dM = 0, lambda = 0, V(t) = t on [0,1]: the norm integral is 1.
    auto ones = BsdeIterate::zero(4, clock.nodes());
    for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t k = 0; k < clock.nodes(); ++k) ones.y(p, k) = 1.0;
    CHECK(weighted_norm(ones, clock, 0.0) == Catch::Approx(1.0).margin(1e-12));

    // Contraction-proof weight: lambda = 1 + 2 (K_Y^2 + K_Z^2) = 5 at K = 1.
    SolverConfig cfg;
    CHECK(cfg.effective_lambda(sin_cos_driver()) == 5.0);
    CHECK(cfg.effective_lambda(decay_driver()) == 3.0);

    CHECK_THROWS_AS(weighted_norm(zero, clock, -1.0), domain_error);
}

TEST_CASE("solve with a driver independent of (y,z) converges immediately") {
    auto model = std_brownian(1.0, 10);
    SolverConfig cfg;
    cfg.n_paths = 5000;
    cfg.seed = 21;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    std::vector<double> x0{0.2};
    auto [it, report] = solve(heat_driver(), model, 0.0, x0, cfg);
    CHECK(report.converged);
    CHECK(report.iterations == 2);  // one productive step plus the confirming one
    CHECK(report.diff_norms_sq.back() == Catch::Approx(0.0).margin(1e-20));
    // u(0, 0.2) = x^2 + T = 1.04 at the start node.
    CHECK(it.y(0, 0) == Catch::Approx(0.2 * 0.2 + 1.0).margin(0.02));
}

TEST_CASE("solve matches the linear-decay ODE") {
    // f = -y, g = 1: Y_t = e^{-(T-t)}; the discrete fixed point is
    // (1 + dt)^{-(N-k)} which the iteration must hit to regression accuracy.
    const std::size_t steps = 50;
    auto model = std_brownian(1.0, steps);
    SolverConfig cfg;
    cfg.n_paths = 10000;
    cfg.seed = 5;
    cfg.tol = 1e-4;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    std::vector<double> x0{0.0};
    auto [it, report] = solve(decay_driver(), model, 0.0, x0, cfg);
    CHECK(report.converged);
    CHECK(report.iterations <= 8);
    const double dt = 1.0 / steps;
    for (std::size_t k = 0; k <= steps; k += 10) {
        const double continuous = std::exp(-(1.0 - model.clock().time(k)));
        CHECK(it.y(0, k) == Catch::Approx(continuous).epsilon(0.02));
    }

    // Driven to a much tighter tolerance the iteration lands on the exact
    // discrete fixed point (1 + dt)^{-(N-k)}.
    cfg.tol = 1e-9;
    cfg.max_iters = 30;
    auto [sharp, report2] = solve(decay_driver(), model, 0.0, x0, cfg);
    for (std::size_t k = 0; k <= steps; k += 10) {
        const double discrete = std::pow(1.0 + dt, -static_cast<double>(steps - k));
        CHECK(sharp.y(0, k) == Catch::Approx(discrete).margin(1e-7));
    }
}

TEST_CASE("solve reports non-convergence with the ratio history") {
    auto model = std_brownian(1.0, 10);
    SolverConfig cfg;
    cfg.n_paths = 1000;
    cfg.max_iters = 1;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    std::vector<double> x0{0.0};
    try {
        solve(sin_cos_driver(), model, 0.0, x0, cfg);
        FAIL("expected convergence_error");
    } catch (const convergence_error& e) {
        CHECK(e.diff_norms_sq.size() == 1);
    }
}

TEST_CASE("solve rejects drivers that violate their declared Lipschitz constants") {
    auto model = std_brownian(1.0, 5);
    Driver bad{[](double, std::span<const double>, double y, double) { return 10.0 * y; },
               [](std::span<const double>) { return 1.0; }, 0.1, 0.0};
    SolverConfig cfg;
    cfg.n_paths = 500;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    std::vector<double> x0{0.0};
    CHECK_THROWS_AS(solve(bad, model, 0.0, x0, cfg), domain_error);
}

TEST_CASE("terminal exactness, constancy before start, nonnegative Zsq") {
    auto model = std_brownian(1.0, 10);
    std::vector<double> x0{1.0};
    auto ens = sample_paths(model, 0.5, x0, 3000, 13);
    auto it = picard_step(BsdeIterate::zero(3000, 11), ens, sin_cos_driver(),
                          RegressionBasis::polynomial(1, 2), 1e-8 * 3000);
    for (std::size_t p = 0; p < 3000; p += 501) {
        const double xT = ens.state1(p, 10);
        CHECK(it.y(p, 10) == xT * xT);
        for (std::size_t k = 0; k < 5; ++k) CHECK(it.y(p, k) == it.y(p, 5));
        for (std::size_t c = 0; c < 5; ++c) {
            CHECK(it.dm(p, c) == 0.0);
            CHECK(it.zsq(p, c) == 0.0);
        }
        for (std::size_t c = 0; c < 10; ++c) CHECK(it.zsq(p, c) >= 0.0);
    }
}

TEST_CASE("flat clock cells route mass to the singular account") {
    // V is flat on cell 1: the process still moves there, so dM is nonzero
    // while Zsq stays 0 and the squared mass shows up as singular.
    Clock clock({0.0, 0.25, 0.5, 0.75, 1.0}, {0.0, 0.25, 0.25, 0.75, 1.0});
    auto model = ForwardModel::brownian(clock, 1, DiffusionCoeffs::scalar(0.0, 1.0));
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, 5000, 3);
    auto it = picard_step(BsdeIterate::zero(5000, 5), ens, heat_driver(),
                          RegressionBasis::polynomial(1, 2), 1e-8 * 5000);
    CHECK(it.singular_mass[1] > 0.0);
    CHECK(it.singular_mass[0] == 0.0);
    for (std::size_t p = 0; p < 5000; p += 997) CHECK(it.zsq(p, 1) == 0.0);

    // The indicator from decomposing the clock against itself marks the
    // flat cell; splitting reconstructs dM exactly.
    auto clock_measure = DiscreteMeasurePath::from_clock(clock);
    auto dec = lebesgue_decompose(clock_measure, clock_measure);
    auto [ac, sing] = martingale_split(it.dm, dec.indicator);
    for (std::size_t p = 0; p < 5000; p += 997)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(ac(p, c) + sing(p, c) == it.dm(p, c));
            if (c == 1) CHECK(ac(p, c) == 0.0);
        }
}

TEST_CASE("fixed-point consistency: one more step barely moves a converged solve") {
    auto model = std_brownian(1.0, 20);
    SolverConfig cfg;
    cfg.n_paths = 10000;
    cfg.seed = 8;
    cfg.tol = 1e-5;
    cfg.max_iters = 30;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, cfg.n_paths, cfg.seed);
    auto [it, report] = solve_on(ens, decay_driver(), cfg);
    auto again = picard_step(it, ens, decay_driver(), cfg.basis, cfg.ridge());
    const double d2 = weighted_norm_diff(again, it, ens.clock(), report.lambda);
    CHECK(std::sqrt(d2) < cfg.tol);
}

TEST_CASE("restriction consistency: a later anchor reproduces Y on the overlap") {
    auto model = std_brownian(1.0, 20);
    SolverConfig cfg;
    cfg.n_paths = 4000;
    cfg.seed = 12;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    std::vector<double> x0{0.3};
    auto ens = sample_paths(model, 0.0, x0, cfg.n_paths, cfg.seed);
    auto section = ens.section_from(0.5);

    // Matched iterates agree exactly on the overlap: the backward recursion
    // at a node never looks left of it.
    auto a = BsdeIterate::zero(cfg.n_paths, 21);
    auto b = BsdeIterate::zero(cfg.n_paths, 21);
    for (int it = 0; it < 4; ++it) {
        a = picard_step(a, ens, decay_driver(), cfg.basis, cfg.ridge());
        b = picard_step(b, section, decay_driver(), cfg.basis, cfg.ridge());
    }
    for (std::size_t p = 0; p < cfg.n_paths; p += 401)
        for (std::size_t k = 10; k <= 20; ++k)
            CHECK(b.y(p, k) == Catch::Approx(a.y(p, k)).margin(1e-12));

    // Independently converged solves agree at the stopping tolerance.
    auto [full, r1] = solve_on(ens, decay_driver(), cfg);
    auto [later, r2] = solve_on(section, decay_driver(), cfg);
    for (std::size_t p = 0; p < cfg.n_paths; p += 401)
        for (std::size_t k = 10; k <= 20; ++k)
            CHECK(later.y(p, k) == Catch::Approx(full.y(p, k)).margin(2.0 * cfg.tol));
}

TEST_CASE("contraction of the Picard map on random input pairs") {
    // ||Phi(U,N) - Phi(U',N')||^2_lambda <= (1/2 + slack) ||(U,N)-(U',N')||^2,
    // slack 0.1 at 10^4 paths; bracket densities of the inputs come from the
    // joint estimator so the Cauchy-Schwarz step holds for the estimates.
    const std::size_t n = 10000;
    const std::size_t steps = 100;
    auto model = std_brownian(1.0, steps);
    auto driver = sin_cos_driver();
    SolverConfig cfg;
    cfg.basis = RegressionBasis::polynomial(1, 2);
    const double ridge = 1e-8 * n;
    const double lambda = cfg.effective_lambda(driver);  // 5

    std::vector<double> x0{0.0};
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
        auto ens = sample_paths(model, 0.0, x0, n, 1000 + rep);
        auto mk_random_pair = [&](std::uint64_t tag) {
            BsdeIterate it = BsdeIterate::zero(n, steps + 1);
            for (std::size_t p = 0; p < n; ++p) {
                PathRng rng(mix_seed(777, rep, tag), p);
                const double a0 = 2.0 * rng.uniform() - 1.0;
                const double a1 = 2.0 * rng.uniform() - 1.0;
                const double a2 = rng.uniform();
                for (std::size_t k = 0; k <= steps; ++k) {
                    const double x = ens.state1(p, k);
                    it.y(p, k) = a0 + a1 * x + a2 * x * x;
                }
                for (std::size_t c = 0; c < steps; ++c) {
                    const double x = ens.state1(p, c);
                    const double vol = 0.5 + a2 * x * x;
                    it.dm(p, c) = vol * rng.normal() * std::sqrt(ens.clock().dv(c));
                }
            }
            return it;
        };
        auto in1 = mk_random_pair(1);
        auto in2 = mk_random_pair(2);
        auto joint = estimate_bracket_density(in1.dm, in2.dm, ens, cfg.basis, ridge);
        in1.zsq = joint.daa;
        in2.zsq = joint.dbb;

        auto out1 = picard_step(in1, ens, driver, cfg.basis, ridge);
        auto out2 = picard_step(in2, ens, driver, cfg.basis, ridge);
        const double num = weighted_norm_diff(out1, out2, ens.clock(), lambda);
        const double den = weighted_norm_diff(in1, in2, ens.clock(), lambda);
        REQUIRE(den > 0.0);
        CHECK(num / den <= 0.5 + 0.1);
    }
}

TEST_CASE("bracket density of identical and scaled increments") {
    const std::size_t n = 5000;
    auto model = std_brownian(1.0, 10);
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, n, 50);
    auto quad_basis = RegressionBasis::polynomial(1, 2);
    auto linear_phi = named_test_function("linear", 1);
    auto dm = martingale_path(model, linear_phi, ens);

    SECTION("identical pair: off-diagonal equals diagonal, det = 0") {
        auto bd = estimate_bracket_density(dm, dm, ens, quad_basis, 1e-8 * n);
        for (std::size_t p = 0; p < n; p += 991)
            for (std::size_t c = 0; c < 10; ++c) {
                CHECK(bd.dab(p, c) == Catch::Approx(bd.daa(p, c)).margin(1e-9));
                const double det = bd.daa(p, c) * bd.dbb(p, c) - bd.dab(p, c) * bd.dab(p, c);
                CHECK(det >= -1e-10);
                CHECK(det <= 1e-9 * std::max(1.0, bd.daa(p, c) * bd.daa(p, c)));
            }
    }

    SECTION("doubled increments scale the densities by {1, 4, 2}") {
        Array2D dm2(n, 10);
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t c = 0; c < 10; ++c) dm2(p, c) = 2.0 * dm(p, c);
        auto bd = estimate_bracket_density(dm, dm2, ens, quad_basis, 1e-8 * n);
        for (std::size_t p = 0; p < n; p += 991)
            for (std::size_t c = 0; c < 10; ++c) {
                CHECK(bd.dbb(p, c) == Catch::Approx(4.0 * bd.daa(p, c)).margin(1e-8));
                CHECK(bd.dab(p, c) == Catch::Approx(2.0 * bd.daa(p, c)).margin(1e-8));
            }
    }
}

TEST_CASE("independent noise has vanishing cross density") {
    const std::size_t n = 20000;
    auto model = std_brownian(1.0, 10);
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, n, 51);
    Array2D dma(n, 10), dmb(n, 10);
    const double dv = 0.1;
    for (std::size_t p = 0; p < n; ++p) {
        PathRng ra(111, p), rb(222, p);
        for (std::size_t c = 0; c < 10; ++c) {
            dma(p, c) = ra.normal() * std::sqrt(dv);
            dmb(p, c) = rb.normal() * std::sqrt(dv);
        }
    }
    auto bd = estimate_bracket_density(dma, dmb, ens, RegressionBasis::polynomial(1, 2), 1e-8 * n);
    // Cross density at the first cell is a frozen-state mean: compare with
    // the MC standard error of dma*dmb/dv.
    std::vector<double> prod(n);
    for (std::size_t p = 0; p < n; ++p) prod[p] = dma(p, 0) * dmb(p, 0) / dv;
    const double se = sd_of(prod) / std::sqrt(static_cast<double>(n));
    CHECK(std::fabs(bd.dab(0, 0)) <= 3.0 * se);
}

TEST_CASE("square-root stability inequality holds on PSD-projected densities") {
    const std::size_t n = 8000;
    auto model = std_brownian(1.0, 8);
    std::vector<double> x0{0.1};
    auto ens = sample_paths(model, 0.0, x0, n, 77);
    Array2D dma(n, 8), dmb(n, 8);
    for (std::size_t p = 0; p < n; ++p) {
        PathRng rng(333, p);
        for (std::size_t c = 0; c < 8; ++c) {
            const double x = ens.state1(p, c);
            const double common = rng.normal();
            dma(p, c) = (1.0 + 0.2 * x * x) * common * std::sqrt(0.125);
            dmb(p, c) = (0.5 * common + 0.3 * rng.normal()) * std::sqrt(0.125);
        }
    }
    auto bd = estimate_bracket_density(dma, dmb, ens, RegressionBasis::polynomial(1, 2), 1e-8 * n);
    for (std::size_t p = 0; p < n; p += 797)
        for (std::size_t c = 0; c < 8; ++c) {
            const double a = bd.daa(p, c), b = bd.dbb(p, c), x = bd.dab(p, c);
            const double lhs = std::sqrt(a) - std::sqrt(b);
            CHECK(lhs * lhs <= a - 2.0 * x + b + 1e-9);
            CHECK(a * b - x * x >= -1e-10);
        }
}

TEST_CASE("flat cells report singular bracket mass") {
    Clock clock({0.0, 0.5, 1.0}, {0.0, 0.0, 1.0});
    auto model = ForwardModel::brownian(clock, 1, DiffusionCoeffs::scalar(0.0, 1.0));
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, 2000, 5);
    auto linear_phi = named_test_function("linear", 1);
    auto dm = martingale_path(model, linear_phi, ens);
    auto bd = estimate_bracket_density(dm, dm, ens, RegressionBasis::polynomial(1, 2), 1e-8 * 2000);
    CHECK(bd.singular_a[0] > 0.0);
    for (std::size_t p = 0; p < 2000; p += 397) CHECK(bd.daa(p, 0) == 0.0);
    CHECK(bd.singular_a[1] == 0.0);
}

TEST_CASE("martingale diagnostic separates martingales from drifts") {
    const std::size_t n = 10000;
    auto model = std_brownian(1.0, 10);
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, n, 303);
    auto basis = RegressionBasis::polynomial(1, 2);

    Array2D zeros(n, 10, 0.0);
    auto rep0 = martingale_diagnostic(zeros, ens, basis);
    CHECK(rep0.max_z == 0.0);

    // True Brownian increments pass at 3 standard errors.
    auto linear_phi = named_test_function("linear", 1);
    auto dm = martingale_path(model, linear_phi, ens);
    auto rep1 = martingale_diagnostic(dm, ens, basis);
    CHECK(rep1.passes(3.0));

    // A deterministic drift dM = dV is flagged loudly.
    Array2D drift(n, 10);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t c = 0; c < 10; ++c) drift(p, c) = ens.clock().dv(c);
    auto rep2 = martingale_diagnostic(drift, ens, basis);
    CHECK_FALSE(rep2.passes(3.0));
}
