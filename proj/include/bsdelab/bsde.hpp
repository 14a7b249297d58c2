#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsdelab/array2d.hpp"
#include "bsdelab/clock.hpp"
#include "bsdelab/driver.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/path_ensemble.hpp"
#include "bsdelab/regression.hpp"

namespace bsdelab {

/// One Picard iterate: per-path Y values on the grid nodes, martingale
/// increments and bracket-density estimates Z^2 = d<M>/dV per grid cell,
/// plus the per-time regressions that produced Y.
///
/// Invariants: Y at t_N equals g(X_T) path-wise; Y is frozen at its
/// start-time value before the start; Zsq >= 0 with clip events counted;
/// increments on dV = 0 cells are carried in singular_mass, not Zsq.
struct BsdeIterate {
    Array2D y;    // paths x nodes
    Array2D dm;   // paths x cells
    Array2D zsq;  // paths x cells
    int iteration = 0;
    long clip_count = 0;
    double start_target_sd = 0.0;  // spread of the conditional-expectation target at s
    std::vector<double> singular_mass;  // per-cell mean dm^2 on dV = 0 cells
    std::vector<std::optional<FittedRegression>> fits;  // per node, where a fit ran

    static BsdeIterate zero(std::size_t n_paths, std::size_t nodes) {
        BsdeIterate it;
        it.y = Array2D(n_paths, nodes, 0.0);
        it.dm = Array2D(n_paths, nodes - 1, 0.0);
        it.zsq = Array2D(n_paths, nodes - 1, 0.0);
        it.singular_mass.assign(nodes - 1, 0.0);
        it.fits.resize(nodes);
        return it;
    }
};

struct SolverConfig {
    double lambda = -1.0;  // < 0: use 1 + 2 (K_Y^2 + K_Z^2)
    int max_iters = 20;
    double tol = 1e-4;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    double ridge_scale = 1e-8;  // ridge = ridge_scale * n_paths
    RegressionBasis basis = RegressionBasis::default_for(1);

    double effective_lambda(const Driver& driver) const {
        if (lambda >= 0.0) return lambda;
        return 1.0 + 2.0 * (driver.lip_y * driver.lip_y + driver.lip_z * driver.lip_z);
    }
    double ridge() const { return ridge_scale * static_cast<double>(n_paths); }
};

struct ConvergenceReport {
    std::vector<double> diff_norms_sq;  // ||iterate_k - iterate_{k-1}||_lambda^2
    std::vector<double> ratios;         // successive squared-norm ratios
    std::vector<long> clip_counts;
    bool converged = false;
    int iterations = 0;
    double lambda = 0.0;
    double wall_ms = 0.0;
};

namespace detail {

inline const double* node_states(const PathEnsemble& ens, std::size_t node) {
    return ens.raw().data() + node * ens.dim();
}

inline std::size_t node_stride(const PathEnsemble& ens) { return ens.clock().nodes() * ens.dim(); }

inline NormalEquations node_equations(const PathEnsemble& ens, std::size_t node,
                                      const RegressionBasis& basis, double ridge) {
    return build_normal_equations({node_states(ens, node), ens.raw().size() - node * ens.dim()},
                                  ens.n_paths(), node_stride(ens), basis, ridge);
}

inline std::vector<double> fit_predict(const NormalEquations& ne, const PathEnsemble& ens,
                                       std::size_t node, std::span<const double> targets,
                                       std::optional<FittedRegression>* keep = nullptr) {
    std::span<const double> states{node_states(ens, node), ens.raw().size() - node * ens.dim()};
    FittedRegression f = solve_one(ne, states, node_stride(ens), targets);
    auto preds = f.predict(states, ens.n_paths(), node_stride(ens));
    if (keep) *keep = std::move(f);
    return preds;
}

}  // namespace detail

/// One application of the Picard map on a fixed ensemble.
///
/// Backward over the grid: accumulate the per-path target
/// xi + sum_{cells j past t} f(t_j-, X, Y_prev, sqrt(Zsq_prev)) dV_j,
/// project it on the basis at each node to get Y, take the martingale
/// residual dM = dY + f dV, and regress (dM)^2/dV at each cell for Zsq
/// (clipped at zero). Cells with dV = 0 route their squared increment to
/// the singular account instead.
inline BsdeIterate picard_step(const BsdeIterate& prev, const PathEnsemble& ens,
                               const Driver& driver, const RegressionBasis& basis, double ridge) {
    const Clock& clock = ens.clock();
    const std::size_t n = ens.n_paths();
    const std::size_t nodes = clock.nodes();
    const std::size_t cells = clock.cells();
    const std::size_t s_idx = ens.start_index();
    if (prev.y.rows() != n || prev.y.cols() != nodes)
        throw alignment_error("picard_step: previous iterate not on this ensemble");

    BsdeIterate next = BsdeIterate::zero(n, nodes);
    next.iteration = prev.iteration + 1;

    // Driver values at left endpoints, frozen inputs from the previous iterate.
    Array2D fvals(n, cells, 0.0);
    for (std::size_t c = s_idx; c < cells; ++c) {
        const double t = clock.time(c);
        for (std::size_t p = 0; p < n; ++p) {
            const double z = std::sqrt(std::max(prev.zsq(p, c), 0.0));
            const double y = prev.y(p, c);
            const double fv = driver.f(t, ens.state(p, c), y, z);
            if (!std::isfinite(fv))
                throw numeric_error("picard_step: driver returned non-finite value at t=" +
                                    std::to_string(t) + " x=" + std::to_string(ens.state1(p, c)) +
                                    " y=" + std::to_string(y) + " z=" + std::to_string(z));
            fvals(p, c) = fv;
        }
    }

    // Terminal condition holds path-wise exactly.
    std::vector<double> target(n);
    for (std::size_t p = 0; p < n; ++p) {
        target[p] = driver.terminal(ens.state(p, nodes - 1));
        if (!std::isfinite(target[p]))
            throw numeric_error("picard_step: terminal function returned non-finite value");
        next.y(p, nodes - 1) = target[p];
    }

    // Backward sweep: accumulate the target and project at each node.
    std::vector<std::optional<detail::NormalEquations>> node_eqs(nodes);
    for (std::size_t k = cells; k-- > s_idx;) {
        for (std::size_t p = 0; p < n; ++p) target[p] += fvals(p, k) * clock.dv(k);
        node_eqs[k] = detail::node_equations(ens, k, basis, ridge);
        auto preds = detail::fit_predict(*node_eqs[k], ens, k, target, &next.fits[k]);
        for (std::size_t p = 0; p < n; ++p) next.y(p, k) = preds[p];
        if (k == s_idx) {
            double mean = 0.0;
            for (double v : target) mean += v;
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (double v : target) var += (v - mean) * (v - mean);
            next.start_target_sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
        }
    }
    for (std::size_t k = 0; k < s_idx; ++k)
        for (std::size_t p = 0; p < n; ++p) next.y(p, k) = next.y(p, s_idx);

    // Martingale residuals of the discrete equation.
    for (std::size_t c = s_idx; c < cells; ++c)
        for (std::size_t p = 0; p < n; ++p)
            next.dm(p, c) = next.y(p, c + 1) - next.y(p, c) + fvals(p, c) * clock.dv(c);

    // Bracket density estimates per cell.
    std::vector<double> sq(n);
    for (std::size_t c = s_idx; c < cells; ++c) {
        const double dv = clock.dv(c);
        if (dv == 0.0) {
            double acc = 0.0;
            for (std::size_t p = 0; p < n; ++p) acc += next.dm(p, c) * next.dm(p, c);
            next.singular_mass[c] = acc / static_cast<double>(n);
            continue;
        }
        for (std::size_t p = 0; p < n; ++p) sq[p] = next.dm(p, c) * next.dm(p, c) / dv;
        auto preds = detail::fit_predict(*node_eqs[c], ens, c, sq);
        for (std::size_t p = 0; p < n; ++p) {
            if (preds[p] < 0.0) {
                ++next.clip_count;
                next.zsq(p, c) = 0.0;
            } else {
                next.zsq(p, c) = preds[p];
            }
        }
    }
    return next;
}

/// The squared lambda-weighted norm of an iterate: the ensemble average of
/// sum_cells e^{lambda V(t-)} (Y(t-)^2 dV + (dM)^2); the squared-increment
/// sum realizes the bracket integral.
inline double weighted_norm(const BsdeIterate& iter, const Clock& clock, double lambda) {
    if (lambda < 0.0) throw domain_error("weighted_norm: lambda must be nonnegative");
    const std::size_t n = iter.y.rows();
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < clock.cells(); ++c) {
            const double w = std::exp(lambda * clock.value(c));
            const double yv = iter.y(p, c);
            acc += w * (yv * yv * clock.dv(c) + iter.dm(p, c) * iter.dm(p, c));
        }
    }
    return acc / static_cast<double>(n);
}

/// Same norm applied to the difference of two iterates on one ensemble.
inline double weighted_norm_diff(const BsdeIterate& a, const BsdeIterate& b, const Clock& clock,
                                 double lambda) {
    require_same_shape(a.y, b.y, "weighted_norm_diff");
    const std::size_t n = a.y.rows();
    double acc = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = 0; c < clock.cells(); ++c) {
            const double w = std::exp(lambda * clock.value(c));
            const double yv = a.y(p, c) - b.y(p, c);
            const double mv = a.dm(p, c) - b.dm(p, c);
            acc += w * (yv * yv * clock.dv(c) + mv * mv);
        }
    }
    return acc / static_cast<double>(n);
}

/// Picard iteration from (Y, M) = (0, 0) on a frozen ensemble, stopping on
/// the lambda-norm of successive differences.
inline std::pair<BsdeIterate, ConvergenceReport> solve_on(const PathEnsemble& ens,
                                                          const Driver& driver,
                                                          const SolverConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const Clock& clock = ens.clock();
    const std::size_t n = ens.n_paths();

    // Hypothesis checks: Lipschitz spot check on realized states, square
    // integrable terminal value.
    {
        std::vector<double> xl(ens.dim()), xh(ens.dim());
        for (std::size_t i = 0; i < ens.dim(); ++i) xl[i] = xh[i] = ens.state(0, 0)[i];
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t k = 0; k < clock.nodes(); ++k) {
                const auto st = ens.state(p, k);
                for (std::size_t i = 0; i < ens.dim(); ++i) {
                    xl[i] = std::min(xl[i], st[i]);
                    xh[i] = std::max(xh[i], st[i]);
                }
            }
        double m2 = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const double g = driver.terminal(ens.state(p, clock.nodes() - 1));
            m2 += g * g;
        }
        m2 /= static_cast<double>(n);
        if (!std::isfinite(m2))
            throw domain_error("solve: terminal value has non-finite second moment");
        const double yz_range = std::max(1.0, 3.0 * std::sqrt(m2));
        if (lipschitz_violation(driver, clock.horizon(), xl, xh, yz_range) > 1e-6)
            throw domain_error("solve: driver violates its declared Lipschitz constants");
    }

    ConvergenceReport report;
    report.lambda = config.effective_lambda(driver);

    RegressionBasis basis = config.basis;
    basis.dim = ens.dim();

    BsdeIterate current = BsdeIterate::zero(n, clock.nodes());
    for (int it = 1; it <= config.max_iters; ++it) {
        BsdeIterate next = picard_step(current, ens, driver, basis, config.ridge());
        const double d2 = weighted_norm_diff(next, current, clock, report.lambda);
        report.diff_norms_sq.push_back(d2);
        if (report.diff_norms_sq.size() > 1) {
            const double prev2 = report.diff_norms_sq[report.diff_norms_sq.size() - 2];
            report.ratios.push_back(prev2 > 0.0 ? d2 / prev2 : 0.0);
        }
        report.clip_counts.push_back(next.clip_count);
        report.iterations = it;
        current = std::move(next);
        if (std::sqrt(d2) < config.tol) {
            report.converged = true;
            break;
        }
    }
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                         .count();
    if (!report.converged)
        throw convergence_error("solve: Picard iteration did not reach tol within max_iters",
                                report.diff_norms_sq, report.ratios);
    return {std::move(current), std::move(report)};
}

/// Samples an ensemble from (s, x) and solves the Markovian BSDE on it.
inline std::pair<BsdeIterate, ConvergenceReport> solve(const Driver& driver,
                                                       const ForwardModel& model, double start_time,
                                                       std::span<const double> start_state,
                                                       const SolverConfig& config) {
    auto ens = sample_paths(model, start_time, start_state, config.n_paths, config.seed);
    return solve_on(ens, driver, config);
}

/// Joint bracket densities of two martingale-increment arrays: per cell the
/// 2x2 matrix (d<M>/dV, d<M,M'>/dV; d<M,M'>/dV, d<M'>/dV) estimated by
/// regressing the normalized second moments on the left-endpoint state, then
/// projected to the nearest positive semidefinite matrix so the
/// Cauchy-Schwarz inequality holds cell-wise. dV = 0 cells report their mass
/// as singular and carry zero densities.
struct BracketDensity {
    Array2D daa;  // d<M>/dV
    Array2D dbb;  // d<M'>/dV
    Array2D dab;  // d<M,M'>/dV
    std::vector<double> singular_a;
    std::vector<double> singular_b;
};

inline BracketDensity estimate_bracket_density(const Array2D& dma, const Array2D& dmb,
                                               const PathEnsemble& ens,
                                               const RegressionBasis& basis_spec, double ridge) {
    require_same_shape(dma, dmb, "estimate_bracket_density");
    const Clock& clock = ens.clock();
    const std::size_t n = ens.n_paths();
    const std::size_t cells = clock.cells();
    if (dma.rows() != n || dma.cols() != cells)
        throw alignment_error("estimate_bracket_density: increments not on this ensemble");

    RegressionBasis basis = basis_spec;
    basis.dim = ens.dim();

    BracketDensity out;
    out.daa = Array2D(n, cells, 0.0);
    out.dbb = Array2D(n, cells, 0.0);
    out.dab = Array2D(n, cells, 0.0);
    out.singular_a.assign(cells, 0.0);
    out.singular_b.assign(cells, 0.0);

    std::vector<double> ta(n), tb(n), tx(n);
    for (std::size_t c = 0; c < cells; ++c) {
        const double dv = clock.dv(c);
        if (dv == 0.0) {
            double sa = 0.0, sb = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                sa += dma(p, c) * dma(p, c);
                sb += dmb(p, c) * dmb(p, c);
            }
            out.singular_a[c] = sa / static_cast<double>(n);
            out.singular_b[c] = sb / static_cast<double>(n);
            continue;
        }
        for (std::size_t p = 0; p < n; ++p) {
            ta[p] = dma(p, c) * dma(p, c) / dv;
            tb[p] = dmb(p, c) * dmb(p, c) / dv;
            tx[p] = dma(p, c) * dmb(p, c) / dv;
        }
        auto ne = detail::node_equations(ens, c, basis, ridge);
        auto pa = detail::fit_predict(ne, ens, c, ta);
        auto pb = detail::fit_predict(ne, ens, c, tb);
        auto px = detail::fit_predict(ne, ens, c, tx);
        for (std::size_t p = 0; p < n; ++p) {
            // Closed-form PSD projection of the symmetric 2x2 matrix.
            const double a = pa[p], b = pb[p], x = px[p];
            const double mean = 0.5 * (a + b);
            const double disc = std::sqrt(0.25 * (a - b) * (a - b) + x * x);
            const double lam_hi = mean + disc;
            const double lam_lo = mean - disc;
            if (lam_lo >= 0.0) {
                out.daa(p, c) = a;
                out.dbb(p, c) = b;
                out.dab(p, c) = x;
            } else if (lam_hi <= 0.0) {
                // both eigenvalues clipped: zero matrix
            } else {
                // keep the positive eigendirection only
                double ux, uy;
                if (std::fabs(x) > 1e-300) {
                    ux = x;
                    uy = lam_hi - a;
                } else {
                    ux = a >= b ? 1.0 : 0.0;
                    uy = a >= b ? 0.0 : 1.0;
                }
                const double norm2 = ux * ux + uy * uy;
                out.daa(p, c) = lam_hi * ux * ux / norm2;
                out.dbb(p, c) = lam_hi * uy * uy / norm2;
                out.dab(p, c) = lam_hi * ux * uy / norm2;
            }
        }
    }
    return out;
}

/// Linear martingale diagnostics: per cell, standardized statistics of the
/// increments against the constant and each basis column of the
/// left-endpoint state. A true discrete martingale keeps every statistic
/// within a few standard errors of zero.
struct MartingaleDiagnosticReport {
    std::vector<double> cell_z;
    double max_z = 0.0;
    std::size_t worst_cell = 0;
    bool passes(double threshold = 3.0) const { return max_z <= threshold; }
};

inline MartingaleDiagnosticReport martingale_diagnostic(const Array2D& dm, const PathEnsemble& ens,
                                                        const RegressionBasis& basis_spec) {
    const Clock& clock = ens.clock();
    const std::size_t n = ens.n_paths();
    const std::size_t cells = clock.cells();
    if (dm.rows() != n || dm.cols() != cells)
        throw alignment_error("martingale_diagnostic: increments not on this ensemble");

    RegressionBasis spec = basis_spec;
    spec.dim = ens.dim();

    MartingaleDiagnosticReport report;
    report.cell_z.assign(cells, 0.0);
    for (std::size_t c = 0; c < cells; ++c) {
        // Statistics S = sum w_i dM_i standardized by the
        // heteroskedasticity-robust estimate sqrt(sum w_i^2 dM_i^2); under
        // the martingale null each is asymptotically standard normal.
        auto robust_z = [](double s, double v) {
            if (v > 0.0) return std::fabs(s) / std::sqrt(v);
            return s == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        };
        double s0 = 0.0, v0 = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            s0 += dm(p, c);
            v0 += dm(p, c) * dm(p, c);
        }
        double z = robust_z(s0, v0);

        ResolvedBasis basis(spec, {detail::node_states(ens, c),
                                   ens.raw().size() - c * ens.dim()},
                            n, detail::node_stride(ens));
        const std::size_t m = basis.size();
        std::vector<double> bmean(m, 0.0), bvals(m);
        for (std::size_t p = 0; p < n; ++p) {
            basis.evaluate(ens.state(p, c), bvals);
            for (std::size_t j = 0; j < m; ++j) bmean[j] += bvals[j];
        }
        for (std::size_t j = 0; j < m; ++j) bmean[j] /= static_cast<double>(n);
        std::vector<double> s(m, 0.0), v(m, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            basis.evaluate(ens.state(p, c), bvals);
            const double d = dm(p, c);
            for (std::size_t j = 0; j < m; ++j) {
                const double w = bvals[j] - bmean[j];
                s[j] += w * d;
                v[j] += w * w * d * d;
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            if (basis.is_constant_column(j)) continue;
            z = std::max(z, robust_z(s[j], v[j]));
        }
        report.cell_z[c] = z;
        if (z > report.max_z) {
            report.max_z = z;
            report.worst_cell = c;
        }
    }
    return report;
}

}  // namespace bsdelab
