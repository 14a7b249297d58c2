#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "bsdelab/errors.hpp"

namespace bsdelab {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Hermite rule for integrals against exp(-x^2) dx, built from the
/// Jacobi matrix (Golub-Welsch).
inline QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw domain_error("gauss_hermite: order must be positive");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = std::sqrt(static_cast<double>(i) / 2.0);
        jacobi(i, i - 1) = b;
        jacobi(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double total = std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = solver.eigenvalues()(i);
        const double v0 = solver.eigenvectors()(0, i);
        rule.weights[i] = total * v0 * v0;
    }
    return rule;
}

/// Composite Simpson over [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
    if (panels < 2) panels = 2;
    if (panels % 2 != 0) ++panels;
    const double h = (b - a) / panels;
    double acc = f(a) + f(b);
    for (int i = 1; i < panels; ++i) acc += f(a + h * i) * (i % 2 == 0 ? 2.0 : 4.0);
    return acc * h / 3.0;
}

/// Integral over [r_lo, r_hi] of g(r) r^{-1-alpha} dr on a log-spaced grid
/// (substitution r = e^s turns the kernel into e^{-alpha s}).
inline double log_radial_integral(const std::function<double(double)>& g, double alpha,
                                  double r_lo, double r_hi, int points) {
    if (!(r_lo > 0.0) || !(r_hi > r_lo))
        throw domain_error("log_radial_integral: need 0 < r_lo < r_hi");
    auto integrand = [&](double s) { return g(std::exp(s)) * std::exp(-alpha * s); };
    return simpson(integrand, std::log(r_lo), std::log(r_hi), points);
}

}  // namespace bsdelab
