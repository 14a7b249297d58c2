#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bsdelab/path_ensemble.hpp"
#include "bsdelab/regression.hpp"

using namespace bsdelab;

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST_CASE("constant targets are reproduced through any polynomial basis") {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    const std::size_t n = 500;
    std::vector<double> states(n), targets(n, 7.0);
    for (auto& s : states) s = unif(gen);
    auto f = fit(targets, states, n, 1, RegressionBasis::polynomial(1, 3), 1e-8 * n);
    auto preds = predict(f, states, n, 1);
    for (double p : preds) CHECK(p == Catch::Approx(7.0).margin(1e-10));
}

TEST_CASE("affine data is interpolated exactly") {
    const std::size_t n = 100;
    std::vector<double> states(n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        states[i] = -1.0 + 2.0 * static_cast<double>(i) / (n - 1);
        targets[i] = 2.0 * states[i] + 1.0;
    }
    auto f = fit(targets, states, n, 1, RegressionBasis::polynomial(1, 2), 0.0);
    auto preds = predict(f, states, n, 1);
    for (std::size_t i = 0; i < n; ++i) CHECK(preds[i] == Catch::Approx(targets[i]).margin(1e-10));

    // Recover the coefficients in the original variable by probing at 0 and 1.
    std::vector<double> probe{0.0, 1.0};
    auto vals = predict(f, probe, 2, 1);
    CHECK(vals[0] == Catch::Approx(1.0).margin(1e-10));
    CHECK(vals[1] - vals[0] == Catch::Approx(2.0).margin(1e-10));
}

TEST_CASE("conditional second moment of brownian motion is recovered") {
    // E[X_T^2 | X_t] = X_t^2 + (T - t) for standard Brownian motion.
    const std::size_t n = 100000;
    auto model = ForwardModel::brownian(Clock::linear(1.0, 10), 1, DiffusionCoeffs::scalar(0.0, 1.0));
    std::vector<double> x0{0.0};
    auto ens = sample_paths(model, 0.0, x0, n, 42);
    const std::size_t k = 5;  // t = 0.5
    std::vector<double> targets(n), states(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double xT = ens.state1(p, 10);
        targets[p] = xT * xT;
        states[p] = ens.state1(p, k);
    }
    auto f = fit(targets, states, n, 1, RegressionBasis::polynomial(1, 2), 1e-8 * n);
    auto preds = predict(f, states, n, 1);
    std::vector<double> err(n);
    for (std::size_t p = 0; p < n; ++p) err[p] = preds[p] - (states[p] * states[p] + 0.5);
    const double se = std::sqrt(var_of(targets) / static_cast<double>(n));
    CHECK(std::fabs(mean_of(err)) <= 3.0 * se);
    // Pointwise agreement within a few times the per-point fit noise.
    for (std::size_t p = 0; p < n; p += 997)
        CHECK(err[p] == Catch::Approx(0.0).margin(0.05));
}

TEST_CASE("predict on the training set reproduces fitted values; zero coefficients give zero") {
    std::vector<double> states{0.1, 0.4, -0.3, 0.9, -0.8};
    std::vector<double> targets{1.0, 2.0, 0.5, -1.0, 0.3};
    auto f = fit(targets, states, 5, 1, RegressionBasis::polynomial(1, 2), 1e-6);
    auto p1 = predict(f, states, 5, 1);
    auto p2 = predict(f, states, 5, 1);
    CHECK(p1 == p2);

    std::vector<double> zeros(5, 0.0);
    auto fz = fit(zeros, states, 5, 1, RegressionBasis::polynomial(1, 2), 1e-6);
    for (double c : fz.coefficients()) CHECK(c == Catch::Approx(0.0).margin(1e-14));
    for (double p : predict(fz, states, 5, 1)) CHECK(p == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("residuals are orthogonal to the basis columns") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unif(-1.0, 3.0);
    const std::size_t n = 2000;
    std::vector<double> states(n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        states[i] = unif(gen);
        targets[i] = std::sin(states[i]) + 0.5 * noise(gen);
    }
    auto f = fit(targets, states, n, 1, RegressionBasis::polynomial(1, 4), 0.0);
    auto preds = predict(f, states, n, 1);

    const auto& basis = f.basis();
    std::vector<double> b(basis.size());
    std::vector<double> dots(basis.size(), 0.0), norms(basis.size(), 0.0);
    double res_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        basis.evaluate({&states[i], 1}, b);
        const double r = targets[i] - preds[i];
        res_norm += r * r;
        for (std::size_t j = 0; j < b.size(); ++j) {
            dots[j] += b[j] * r;
            norms[j] += b[j] * b[j];
        }
    }
    res_norm = std::sqrt(res_norm);
    for (std::size_t j = 0; j < dots.size(); ++j)
        CHECK(std::fabs(dots[j]) <= 1e-8 * std::sqrt(norms[j]) * std::max(res_norm, 1.0));
}

TEST_CASE("projection contracts the sample variance") {
    std::mt19937_64 gen(44);
    std::normal_distribution<double> noise;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 300;
        std::vector<double> states(n), targets(n);
        for (std::size_t i = 0; i < n; ++i) {
            states[i] = noise(gen);
            targets[i] = std::cos(3.0 * states[i]) + noise(gen);
        }
        auto f = fit(targets, states, n, 1, RegressionBasis::polynomial(1, 4), 0.0);
        auto preds = predict(f, states, n, 1);
        CHECK(var_of(preds) <= var_of(targets) * (1.0 + 1e-12));
    }
}

TEST_CASE("tower property: iterated fits agree with the direct fit") {
    const std::size_t n = 80000;
    auto model = ForwardModel::brownian(Clock::linear(1.0, 10), 1, DiffusionCoeffs::scalar(0.0, 1.0));
    std::vector<double> x0{0.3};
    auto ens = sample_paths(model, 0.0, x0, n, 17);
    std::vector<double> targets(n), s_mid(n), s_early(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double xT = ens.state1(p, 10);
        targets[p] = xT * xT * xT;  // odd payoff keeps it nontrivial
        s_mid[p] = ens.state1(p, 6);
        s_early[p] = ens.state1(p, 3);
    }
    auto basis = RegressionBasis::polynomial(1, 3);
    auto f_mid = fit(targets, s_mid, n, 1, basis, 1e-8 * n);
    auto towered = fit(predict(f_mid, s_mid, n, 1), s_early, n, 1, basis, 1e-8 * n);
    auto direct = fit(targets, s_early, n, 1, basis, 1e-8 * n);
    auto pt = predict(towered, s_early, n, 1);
    auto pd = predict(direct, s_early, n, 1);
    double rms = 0.0;
    for (std::size_t p = 0; p < n; ++p) rms += (pt[p] - pd[p]) * (pt[p] - pd[p]);
    rms = std::sqrt(rms / static_cast<double>(n));
    const double scale = std::sqrt(var_of(targets));
    CHECK(rms <= 0.03 * scale);
}

TEST_CASE("rank deficiency without ridge raises, with ridge degrades gracefully") {
    std::vector<double> states(50, 1.25);  // all identical
    std::vector<double> targets(50, 3.0);
    CHECK_THROWS_AS(fit(targets, states, 50, 1, RegressionBasis::polynomial(1, 2), 0.0),
                    singular_error);
    auto f = fit(targets, states, 50, 1, RegressionBasis::polynomial(1, 2), 1e-6);
    CHECK(f.predict_one({&states[0], 1}) == Catch::Approx(3.0).margin(1e-10));
}

TEST_CASE("frozen states give the plain sample mean") {
    std::vector<double> states(64, -0.5);
    std::vector<double> targets(64);
    for (std::size_t i = 0; i < 64; ++i) targets[i] = static_cast<double>(i);
    auto f = fit(targets, states, 64, 1, RegressionBasis::polynomial(1, 2), 1e-8 * 64);
    CHECK(f.predict_one({&states[0], 1}) == Catch::Approx(mean_of(targets)).margin(1e-9));
}

TEST_CASE("local partition fits affine data exactly within bins") {
    const std::size_t n = 400;
    std::vector<double> states(n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        states[i] = -2.0 + 4.0 * static_cast<double>(i) / (n - 1);
        targets[i] = 3.0 * states[i] - 1.0;
    }
    auto f = fit(targets, states, n, 1, RegressionBasis::local_partition(1, 4), 0.0);
    auto preds = predict(f, states, n, 1);
    for (std::size_t i = 0; i < n; ++i) CHECK(preds[i] == Catch::Approx(targets[i]).margin(1e-9));
}

TEST_CASE("multivariate polynomial basis covers the cross terms") {
    // Total degree 2 in d=2: 1, u1, u2, u1^2, u1 u2, u2^2 -> 6 functions.
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const std::size_t n = 500;
    std::vector<double> states(2 * n), targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        states[2 * i] = unif(gen);
        states[2 * i + 1] = unif(gen);
        targets[i] = 1.0 + states[2 * i] * states[2 * i + 1];
    }
    auto f = fit(targets, states, n, 2, RegressionBasis::polynomial(2, 2), 0.0);
    CHECK(f.coefficients().size() == 6);
    auto preds = predict(f, states, n, 2);
    for (std::size_t i = 0; i < n; ++i) CHECK(preds[i] == Catch::Approx(targets[i]).margin(1e-9));
}
