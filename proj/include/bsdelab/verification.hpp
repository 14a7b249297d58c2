#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "bsdelab/driver.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/test_function.hpp"

namespace bsdelab {

/// Closed-form solution oracles for the Brownian specialization, used by the
/// statistical acceptance checks. Each oracle knows its own value, its
/// matching driver, and presents itself as an analytic test function.
struct Oracle {
    enum class Kind { heat_quadratic, linear_driver_ode, gaussian_moment };

    Kind kind = Kind::heat_quadratic;
    double horizon = 1.0;
    double sigma = 1.0;    // diffusion coefficient of the matching model
    double rate = -1.0;    // c in f = c y (linear_driver_ode)
    double terminal_value = 1.0;  // constant g (linear_driver_ode)
    int power = 2;         // moment order (gaussian_moment)

    static Oracle heat(double horizon = 1.0, double sigma = 1.0) {
        Oracle o;
        o.kind = Kind::heat_quadratic;
        o.horizon = horizon;
        o.sigma = sigma;
        return o;
    }

    static Oracle linear_ode(double rate, double terminal_value, double horizon = 1.0) {
        Oracle o;
        o.kind = Kind::linear_driver_ode;
        o.rate = rate;
        o.terminal_value = terminal_value;
        o.horizon = horizon;
        return o;
    }

    static Oracle moment(int power, double horizon = 1.0, double sigma = 1.0) {
        if (power < 1 || power > 4) throw config_error("gaussian_moment: power must be 1..4");
        Oracle o;
        o.kind = Kind::gaussian_moment;
        o.power = power;
        o.horizon = horizon;
        o.sigma = sigma;
        return o;
    }

    double value(double t, double x) const {
        const double tau = horizon - t;
        const double s2 = sigma * sigma;
        switch (kind) {
            case Kind::heat_quadratic:
                return x * x + s2 * tau;
            case Kind::linear_driver_ode:
                return terminal_value * std::exp(rate * tau);
            case Kind::gaussian_moment:
                switch (power) {
                    case 1: return x;
                    case 2: return x * x + s2 * tau;
                    case 3: return x * x * x + 3.0 * s2 * tau * x;
                    case 4:
                        return x * x * x * x + 6.0 * s2 * tau * x * x + 3.0 * s2 * s2 * tau * tau;
                }
                break;
        }
        throw config_error("oracle_value: unknown oracle kind");
    }

    /// Analytic (value, time derivative, gradient, Hessian) view in d = 1.
    TestFunction as_test_function() const {
        const Oracle o = *this;
        auto val = [o](double t, std::span<const double> x) { return o.value(t, x[0]); };
        auto dt = [o](double t, std::span<const double> x) {
            const double tau = o.horizon - t;
            const double s2 = o.sigma * o.sigma;
            switch (o.kind) {
                case Kind::heat_quadratic: return -s2;
                case Kind::linear_driver_ode: return -o.rate * o.value(t, x[0]);
                case Kind::gaussian_moment:
                    switch (o.power) {
                        case 1: return 0.0;
                        case 2: return -s2;
                        case 3: return -3.0 * s2 * x[0];
                        case 4: return -(6.0 * s2 * x[0] * x[0] + 6.0 * s2 * s2 * tau);
                    }
            }
            return 0.0;
        };
        auto grad = [o](double t, std::span<const double> x, std::span<double> out) {
            const double tau = o.horizon - t;
            const double s2 = o.sigma * o.sigma;
            switch (o.kind) {
                case Kind::heat_quadratic: out[0] = 2.0 * x[0]; return;
                case Kind::linear_driver_ode: out[0] = 0.0; return;
                case Kind::gaussian_moment:
                    switch (o.power) {
                        case 1: out[0] = 1.0; return;
                        case 2: out[0] = 2.0 * x[0]; return;
                        case 3: out[0] = 3.0 * x[0] * x[0] + 3.0 * s2 * tau; return;
                        case 4: out[0] = 4.0 * x[0] * x[0] * x[0] + 12.0 * s2 * tau * x[0]; return;
                    }
            }
        };
        auto hess = [o](double t, std::span<const double> x, std::span<double> out) {
            const double tau = o.horizon - t;
            const double s2 = o.sigma * o.sigma;
            switch (o.kind) {
                case Kind::heat_quadratic: out[0] = 2.0; return;
                case Kind::linear_driver_ode: out[0] = 0.0; return;
                case Kind::gaussian_moment:
                    switch (o.power) {
                        case 1: out[0] = 0.0; return;
                        case 2: out[0] = 2.0; return;
                        case 3: out[0] = 6.0 * x[0]; return;
                        case 4: out[0] = 12.0 * x[0] * x[0] + 12.0 * s2 * tau; return;
                    }
            }
        };
        return TestFunction::analytic(1, val, dt, grad, hess);
    }

    /// The driver whose Markovian BSDE this oracle solves.
    Driver driver() const {
        switch (kind) {
            case Kind::heat_quadratic:
                return Driver{[](double, std::span<const double>, double, double) { return 0.0; },
                              [](std::span<const double> x) { return x[0] * x[0]; }, 0.0, 0.0};
            case Kind::linear_driver_ode: {
                const double c = rate;
                const double g0 = terminal_value;
                return Driver{[c](double, std::span<const double>, double y, double) { return c * y; },
                              [g0](std::span<const double>) { return g0; }, std::fabs(c), 0.0};
            }
            case Kind::gaussian_moment: {
                const int p = power;
                return Driver{[](double, std::span<const double>, double, double) { return 0.0; },
                              [p](std::span<const double> x) { return std::pow(x[0], p); }, 0.0, 0.0};
            }
        }
        throw config_error("Oracle::driver: unknown kind");
    }
};

inline double oracle_value(const Oracle& oracle, double t, double x) { return oracle.value(t, x); }

/// A point estimate with its standard error.
struct Estimate {
    double value = 0.0;
    double stderr_value = 0.0;
};

/// Gate |estimate - truth| <= 3 SE + bias_budget per entry, boundary
/// inclusive. worst_z is the largest (|error| - budget) / SE across entries.
struct CompareReport {
    bool pass = true;
    double worst_z = 0.0;
    std::size_t worst_index = 0;
};

inline CompareReport statistical_compare(std::span<const Estimate> estimates,
                                         std::span<const double> truths, double bias_budget) {
    if (estimates.size() != truths.size())
        throw alignment_error("statistical_compare: length mismatch");
    if (bias_budget < 0.0) throw domain_error("statistical_compare: negative bias budget");
    CompareReport report;
    report.worst_z = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const double err = std::fabs(estimates[i].value - truths[i]);
        const double se = estimates[i].stderr_value;
        const bool ok = err <= 3.0 * se + bias_budget;
        double z;
        if (se > 0.0)
            z = (err - bias_budget) / se;
        else
            z = ok ? 0.0 : std::numeric_limits<double>::infinity();
        if (z > report.worst_z) {
            report.worst_z = z;
            report.worst_index = i;
        }
        report.pass = report.pass && ok;
    }
    if (estimates.empty()) report.worst_z = 0.0;
    return report;
}

}  // namespace bsdelab
