#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bsdelab/clock.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/quadrature.hpp"
#include "bsdelab/test_function.hpp"

namespace bsdelab {

/// Drift/diffusion coefficient pair. `drift` fills a d-vector, `diffusion`
/// fills a row-major d x d matrix.
struct DiffusionCoeffs {
    std::function<void(double, std::span<const double>, std::span<double>)> drift;
    std::function<void(double, std::span<const double>, std::span<double>)> diffusion;

    static DiffusionCoeffs constant(std::vector<double> mu, std::vector<double> sigma_row_major) {
        return DiffusionCoeffs{
            [mu = std::move(mu)](double, std::span<const double>, std::span<double> out) {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu[i];
            },
            [sg = std::move(sigma_row_major)](double, std::span<const double>, std::span<double> out) {
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = sg[i];
            }};
    }

    static DiffusionCoeffs scalar(double mu, double sigma) {
        return constant({mu}, {sigma});
    }
};

/// Finite-activity jump part: state-dependent rate, Gaussian jump law with
/// componentwise mean/std. The compensator of the full Levy form is treated
/// as folded into the drift of the diffusion part.
struct JumpCoeffs {
    std::function<double(double, std::span<const double>)> rate;
    std::vector<double> jump_mean;
    std::vector<double> jump_std;
    int quad_order = 24;

    static JumpCoeffs constant(double rate_value, std::vector<double> mean, std::vector<double> std_dev,
                               int quad_order = 24) {
        return JumpCoeffs{[rate_value](double, std::span<const double>) { return rate_value; },
                          std::move(mean), std::move(std_dev), quad_order};
    }
};

/// Symmetric alpha-stable part (d = 1). `scale` is the CMS scale: increments
/// over dt are scale * dt^(1/alpha) * S with S standard symmetric stable.
/// The nonlocal operator is evaluated by symmetrized quadrature on the
/// log-spaced window [inner_cut, outer_cut]; below inner_cut the integral is
/// replaced by its exact small-jump second-order term. With `truncated` set,
/// the window IS the model: jumps outside it are removed from the dynamics
/// (small jumps become a matched Brownian part, window jumps a compound
/// Poisson part) and the operator carries no tail.
struct StableCoeffs {
    double alpha = 1.5;
    double scale = 1.0;
    double inner_cut = 1e-4;
    double outer_cut = 1e4;
    bool truncated = false;
    int quad_points = 400;
    double tail_tol = 1e-6;

    /// Levy density constant c in c*|y|^(-1-alpha), tied to the CMS scale so
    /// the sampled increments and the operator describe the same process:
    /// the characteristic exponent is -2*c*K_alpha*|xi|^alpha with
    /// K_alpha = pi / (2 sin(pi alpha / 2) Gamma(1 + alpha)).
    double levy_constant() const {
        const double k_alpha =
            std::numbers::pi / (2.0 * std::sin(std::numbers::pi * alpha / 2.0) * std::tgamma(1.0 + alpha));
        return std::pow(scale, alpha) / (2.0 * k_alpha);
    }

    /// Variance rate of the Brownian part matching jumps below inner_cut.
    double small_jump_variance() const {
        return 2.0 * levy_constant() * std::pow(inner_cut, 2.0 - alpha) / (2.0 - alpha);
    }

    /// Compound-Poisson intensity of jumps with |y| in (inner_cut, outer_cut].
    double window_rate() const {
        return 2.0 * levy_constant() / alpha *
               (std::pow(inner_cut, -alpha) - std::pow(outer_cut, -alpha));
    }
};

/// Forward Markov model: one of a Brownian diffusion, a finite-activity jump
/// diffusion, or a symmetric alpha-stable process, together with its clock.
class ForwardModel {
public:
    enum class Kind { brownian, jump_diffusion, alpha_stable };

    static ForwardModel brownian(Clock clock, std::size_t dim, DiffusionCoeffs coeffs) {
        return ForwardModel(Kind::brownian, std::move(clock), dim, std::move(coeffs), {}, {});
    }

    static ForwardModel jump_diffusion(Clock clock, std::size_t dim, DiffusionCoeffs coeffs,
                                       JumpCoeffs jumps) {
        if (jumps.jump_mean.size() != dim || jumps.jump_std.size() != dim)
            throw config_error("jump_diffusion: jump law dimension mismatch");
        return ForwardModel(Kind::jump_diffusion, std::move(clock), dim, std::move(coeffs),
                            std::move(jumps), {});
    }

    static ForwardModel alpha_stable(Clock clock, StableCoeffs stable) {
        if (stable.alpha <= 0.0 || stable.alpha > 2.0)
            throw config_error("alpha_stable: alpha must lie in (0, 2]");
        if (stable.alpha == 2.0 && stable.truncated)
            throw config_error("alpha_stable: truncation undefined at alpha = 2");
        if (!(stable.inner_cut > 0.0) || !(stable.outer_cut > stable.inner_cut))
            throw config_error("alpha_stable: need 0 < inner_cut < outer_cut");
        return ForwardModel(Kind::alpha_stable, std::move(clock), 1, {}, {}, std::move(stable));
    }

    Kind kind() const { return kind_; }
    std::size_t dim() const { return dim_; }
    const Clock& clock() const { return clock_; }
    const DiffusionCoeffs& diffusion() const { return diffusion_; }
    const JumpCoeffs& jumps() const { return jumps_; }
    const StableCoeffs& stable() const { return stable_; }

    /// For jump diffusions sigma must stay invertible; checked pointwise.
    void require_invertible_sigma(double t, std::span<const double> x) const {
        if (kind_ != Kind::jump_diffusion) return;
        const auto d = static_cast<Eigen::Index>(dim_);
        std::vector<double> sg(dim_ * dim_);
        diffusion_.diffusion(t, x, sg);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
            sg.data(), d, d);
        if (std::fabs(m.determinant()) < 1e-14)
            throw domain_error("jump_diffusion: sigma not invertible at requested point");
    }

private:
    ForwardModel(Kind kind, Clock clock, std::size_t dim, DiffusionCoeffs coeffs, JumpCoeffs jumps,
                 StableCoeffs stable)
        : kind_(kind),
          clock_(std::move(clock)),
          dim_(dim),
          diffusion_(std::move(coeffs)),
          jumps_(std::move(jumps)),
          stable_(std::move(stable)) {}

    Kind kind_;
    Clock clock_;
    std::size_t dim_;
    DiffusionCoeffs diffusion_;
    JumpCoeffs jumps_;
    StableCoeffs stable_;
};

namespace detail {

/// Local part dt phi + 1/2 (sigma sigma^T) : Hess phi + mu . grad phi.
inline double local_generator(const DiffusionCoeffs& coeffs, const TestFunction& phi, double t,
                              std::span<const double> x) {
    const std::size_t d = phi.dim();
    std::vector<double> mu(d), sg(d * d), grad(d), hess(d * d);
    coeffs.drift(t, x, mu);
    coeffs.diffusion(t, x, sg);
    phi.gradient(t, x, grad);
    phi.hessian(t, x, hess);
    double acc = phi.time_deriv(t, x);
    for (std::size_t i = 0; i < d; ++i) {
        acc += mu[i] * grad[i];
        for (std::size_t j = 0; j < d; ++j) {
            double a_ij = 0.0;  // (sigma sigma^T)_{ij}
            for (std::size_t k = 0; k < d; ++k) a_ij += sg[i * d + k] * sg[j * d + k];
            acc += 0.5 * a_ij * hess[i * d + j];
        }
    }
    return acc;
}

/// Expected jump move rate(t,x) * E[phi(t, x+J) - phi(t, x)] by tensor
/// Gauss-Hermite over the Gaussian jump law.
inline double jump_generator(const JumpCoeffs& jumps, const TestFunction& phi, double t,
                             std::span<const double> x) {
    const double rate = jumps.rate(t, x);
    if (rate < 0.0) throw domain_error("jump_diffusion: negative jump rate");
    if (rate == 0.0) return 0.0;
    const std::size_t d = phi.dim();
    static thread_local int cached_order = -1;
    static thread_local QuadratureRule cached_rule;
    if (cached_order != jumps.quad_order) {
        cached_rule = gauss_hermite(jumps.quad_order);
        cached_order = jumps.quad_order;
    }
    const auto& rule = cached_rule;
    const double norm = std::pow(std::numbers::inv_sqrtpi, static_cast<double>(d));

    std::vector<double> shifted(x.begin(), x.end());
    std::vector<std::size_t> idx(d, 0);
    const double base = phi.value(t, x);
    double acc = 0.0;
    // Tensor loop over quadrature nodes in all d components.
    while (true) {
        double w = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double node = rule.nodes[idx[i]];
            shifted[i] = x[i] + jumps.jump_mean[i] + std::numbers::sqrt2 * jumps.jump_std[i] * node;
            w *= rule.weights[idx[i]];
        }
        acc += w * (phi.value(t, shifted) - base);
        std::size_t pos = 0;
        while (pos < d && ++idx[pos] == rule.nodes.size()) idx[pos++] = 0;
        if (pos == d) break;
    }
    return rate * norm * acc;
}

/// Nonlocal stable part on the quadrature window plus the exact small-jump
/// term. For the untruncated operator a power-law tail estimate is formed
/// from the integrand at R/2 and R; a non-decaying or too-large tail raises.
inline double stable_generator(const StableCoeffs& sc, const TestFunction& phi, double t,
                               std::span<const double> x) {
    if (sc.alpha == 2.0) {
        // Gaussian endpoint: generator is scale^2 * d^2/dx^2.
        double hess = 0.0;
        phi.hessian(t, x, {&hess, 1});
        return phi.time_deriv(t, x) + sc.scale * sc.scale * hess;
    }
    const double c = sc.levy_constant();
    const double x0 = x[0];
    const double base = phi.value(t, x);
    auto pair_diff = [&](double r) {
        const double xp = x0 + r, xm = x0 - r;
        return phi.value(t, {&xp, 1}) + phi.value(t, {&xm, 1}) - 2.0 * base;
    };
    double hess = 0.0;
    phi.hessian(t, x, {&hess, 1});
    const double inner = 0.5 * sc.small_jump_variance() * hess;
    const double window = c * log_radial_integral(pair_diff, sc.alpha, sc.inner_cut, sc.outer_cut,
                                                  sc.quad_points);
    if (!sc.truncated) {
        const double r_hi = sc.outer_cut;
        const double g_hi = std::fabs(pair_diff(r_hi)) * std::pow(r_hi, -1.0 - sc.alpha);
        if (g_hi > 0.0) {
            const double g_mid = std::fabs(pair_diff(r_hi / 2.0)) * std::pow(r_hi / 2.0, -1.0 - sc.alpha);
            const double decay = g_mid > 0.0 ? std::log2(g_mid / g_hi) : 2.0;
            const double scale_ref = std::max(1.0, std::fabs(inner + window));
            if (decay <= 1.01)
                throw numeric_error("alpha_stable generator: tail of the nonlocal integral does not "
                                    "decay at R = " + std::to_string(r_hi) +
                                    " (test function grows too fast)");
            const double tail = c * g_hi * r_hi / (decay - 1.0);
            if (tail > sc.tail_tol * scale_ref)
                throw numeric_error("alpha_stable generator: tail estimate " + std::to_string(tail) +
                                    " above tolerance at R = " + std::to_string(r_hi));
        }
    }
    return phi.time_deriv(t, x) + inner + window;
}

}  // namespace detail

/// Evaluates the model generator a(phi)(t, x).
inline double apply_generator(const ForwardModel& model, const TestFunction& phi, double t,
                              std::span<const double> x) {
    if (phi.dim() != model.dim()) throw alignment_error("apply_generator: dimension mismatch");
    switch (model.kind()) {
        case ForwardModel::Kind::brownian:
            return detail::local_generator(model.diffusion(), phi, t, x);
        case ForwardModel::Kind::jump_diffusion:
            model.require_invertible_sigma(t, x);
            return detail::local_generator(model.diffusion(), phi, t, x) +
                   detail::jump_generator(model.jumps(), phi, t, x);
        case ForwardModel::Kind::alpha_stable:
            return detail::stable_generator(model.stable(), phi, t, x);
    }
    throw domain_error("apply_generator: unknown model kind");
}

/// Carre du champs Gamma(phi, psi) = a(phi psi) - phi a(psi) - psi a(phi).
inline double carre_du_champ(const ForwardModel& model, const TestFunction& phi,
                             const TestFunction& psi, double t, std::span<const double> x) {
    const TestFunction prod = phi.product(psi);
    return apply_generator(model, prod, t, x) - phi.value(t, x) * apply_generator(model, psi, t, x) -
           psi.value(t, x) * apply_generator(model, phi, t, x);
}

}  // namespace bsdelab
