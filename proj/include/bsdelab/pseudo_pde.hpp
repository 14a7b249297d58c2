#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bsdelab/bsde.hpp"
#include "bsdelab/driver.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/forward_model.hpp"
#include "bsdelab/path_ensemble.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/test_function.hpp"

namespace bsdelab {

/// Evaluation node (s, x) for the deterministic solution pair.
struct StartNode {
    double s = 0.0;
    std::vector<double> x;
};

/// One extracted solution point: u(s,x) is the start value of a dedicated
/// solve (deterministic at the start since the paths are frozen there),
/// v(s,x) the square root of the first-cell bracket density. cross_z is the
/// standardized gap between two disjoint-seed estimates of u.
struct SolutionPoint {
    StartNode node;
    double u = 0.0;
    double v = 0.0;
    double stderr_u = 0.0;
    double cross_z = 0.0;
    bool ok = false;
    std::string error;
    ConvergenceReport report;  // from the primary-seed solve
};

struct SolutionField {
    std::vector<SolutionPoint> points;
    std::uint64_t seed = 0;
    std::string config_digest;
    double max_cross_z = 0.0;

    bool all_ok() const {
        for (const auto& p : points)
            if (!p.ok) return false;
        return true;
    }
};

namespace detail {

inline void parallel_over(std::size_t count, unsigned threads,
                          const std::function<void(std::size_t)>& work) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const unsigned width = std::min<std::size_t>(threads, count);
    pool.reserve(width);
    for (unsigned t = 0; t < width; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
        });
    for (auto& th : pool) th.join();
}

struct NodeSolveOutcome {
    double u = 0.0;
    double stderr_u = 0.0;
    double v = 0.0;
    ConvergenceReport report;
};

inline NodeSolveOutcome solve_at_node(const Driver& driver, const ForwardModel& model,
                                      const StartNode& node, SolverConfig cfg) {
    auto [it, report] = solve(driver, model, node.s, node.x, cfg);
    const std::size_t s_idx = model.clock().index_of(node.s);
    NodeSolveOutcome out;
    out.u = it.y(0, s_idx);
    out.stderr_u = it.start_target_sd / std::sqrt(static_cast<double>(cfg.n_paths));
    out.v = s_idx < model.clock().cells() ? std::sqrt(std::max(it.zsq(0, s_idx), 0.0)) : 0.0;
    out.report = std::move(report);
    return out;
}

}  // namespace detail

/// Solves the BSDE at each node and reads off (u, v). Every node runs twice
/// with disjoint derived seeds; the cross-seed agreement is recorded as a
/// standardized gap. Node failures are collected, not fatal. Node solves are
/// independent and may run on several threads without changing any result.
inline SolutionField extract_solution(const Driver& driver, const ForwardModel& model,
                                      std::span<const StartNode> nodes, const SolverConfig& config,
                                      unsigned threads = 1) {
    SolutionField field;
    field.seed = config.seed;
    field.points.resize(nodes.size());
    detail::parallel_over(nodes.size(), threads, [&](std::size_t i) {
        SolutionPoint& pt = field.points[i];
        pt.node.s = nodes[i].s;
        pt.node.x = nodes[i].x;
        try {
            SolverConfig cfg_a = config;
            cfg_a.seed = mix_seed(config.seed, i, 0);
            SolverConfig cfg_b = config;
            cfg_b.seed = mix_seed(config.seed, i, 1);
            auto a = detail::solve_at_node(driver, model, nodes[i], cfg_a);
            const auto b = detail::solve_at_node(driver, model, nodes[i], cfg_b);
            pt.u = a.u;
            pt.v = a.v;
            pt.stderr_u = a.stderr_u;
            pt.report = std::move(a.report);
            const double se2 = a.stderr_u * a.stderr_u + b.stderr_u * b.stderr_u;
            if (se2 > 0.0)
                pt.cross_z = std::fabs(a.u - b.u) / std::sqrt(se2);
            else
                pt.cross_z = a.u == b.u ? 0.0 : std::numeric_limits<double>::infinity();
            pt.ok = true;
        } catch (const std::exception& e) {
            pt.ok = false;
            pt.error = e.what();
        }
    });
    for (const auto& p : field.points) field.max_cross_z = std::max(field.max_cross_z, p.cross_z);
    return field;
}

/// Residual of a candidate classical solution at one node:
/// a(u) + f(t, x, u, sqrt(Gamma(u,u))). Negative Gamma from
/// finite-difference noise is clipped to zero and counted.
struct ResidualEntry {
    double t = 0.0;
    std::vector<double> x;
    double residual = 0.0;
};

struct ResidualField {
    std::vector<ResidualEntry> entries;
    double max_abs_residual = 0.0;
    double terminal_gap = 0.0;
    long clip_count = 0;
};

inline ResidualField classical_residual(const TestFunction& u, const ForwardModel& model,
                                        const Driver& driver, std::span<const StartNode> nodes) {
    ResidualField field;
    field.entries.reserve(nodes.size());
    const double horizon = model.clock().horizon();
    for (const auto& node : nodes) {
        ResidualEntry entry;
        entry.t = node.s;
        entry.x = node.x;
        const double gen = apply_generator(model, u, node.s, node.x);
        double gamma = carre_du_champ(model, u, u, node.s, node.x);
        if (gamma < 0.0) {
            ++field.clip_count;
            gamma = 0.0;
        }
        entry.residual = gen + driver.f(node.s, node.x, u.value(node.s, node.x), std::sqrt(gamma));
        field.max_abs_residual = std::max(field.max_abs_residual, std::fabs(entry.residual));
        field.entries.push_back(std::move(entry));

        const double tg = std::fabs(u.value(horizon, node.x) - driver.terminal(node.x));
        field.terminal_gap = std::max(field.terminal_gap, tg);
    }
    return field;
}

/// Tolerances for the classical-vs-BSDE comparison. The pathwise and
/// bracket budgets are additive bias allowances on top of 3 standard
/// errors; the residual threshold gates the precondition.
struct VerifyBudgets {
    double residual_threshold = 1e-4;
    double pathwise = 0.05;
    double bracket = 0.1;
};

struct VerifyReport {
    bool pass = false;
    bool residual_ok = false;
    bool pathwise_ok = false;
    bool bracket_ok = false;
    double residual_max = 0.0;
    double terminal_gap = 0.0;
    double pathwise_gap = 0.0;       // sup over times of mean |u(t, X_t) - Y_t|
    double pathwise_threshold = 0.0;
    double bracket_gap = 0.0;        // |mean(sum dM[u]^2 - sum Gamma dV)|
    double bracket_threshold = 0.0;
};

/// Compares a candidate classical solution with the BSDE solve on a common
/// ensemble: path-wise values against Y, and realized quadratic variation of
/// M[u] against the Gamma integral.
inline VerifyReport verify_classical_vs_bsde(const TestFunction& u, const Driver& driver,
                                             const ForwardModel& model, const StartNode& start,
                                             const SolverConfig& config,
                                             const VerifyBudgets& budgets = {}) {
    VerifyReport report;
    const Clock& clock = model.clock();
    const double horizon = clock.horizon();

    // Residual precondition on a probe grid around the start node.
    {
        std::vector<StartNode> probes;
        for (double frac : {0.0, 0.25, 0.5, 0.75}) {
            const double t = start.s + frac * (horizon - start.s);
            for (double shift : {-1.0, 0.0, 1.0}) {
                StartNode p;
                p.s = t;
                p.x = start.x;
                p.x[0] += shift;
                probes.push_back(std::move(p));
            }
        }
        auto residual = classical_residual(u, model, driver, probes);
        report.residual_max = residual.max_abs_residual;
        report.terminal_gap = residual.terminal_gap;
        report.residual_ok = residual.max_abs_residual <= budgets.residual_threshold;
    }

    auto ens = sample_paths(model, start.s, start.x, config.n_paths, config.seed);
    auto [it, conv] = solve_on(ens, driver, config);
    const std::size_t n = ens.n_paths();
    const std::size_t s_idx = ens.start_index();

    // Path-wise comparison of u(t, X_t) with Y_t.
    double worst_gap = 0.0, worst_se = 0.0;
    for (std::size_t k = s_idx; k < clock.nodes(); ++k) {
        const double t = clock.time(k);
        double mean = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            mean += std::fabs(u.value(t, ens.state(p, k)) - it.y(p, k));
        mean /= static_cast<double>(n);
        if (mean > worst_gap) {
            double var = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                const double d = std::fabs(u.value(t, ens.state(p, k)) - it.y(p, k)) - mean;
                var += d * d;
            }
            worst_gap = mean;
            worst_se = std::sqrt(var / static_cast<double>(n - 1) / static_cast<double>(n));
        }
    }
    report.pathwise_gap = worst_gap;
    report.pathwise_threshold = 3.0 * worst_se + budgets.pathwise;
    report.pathwise_ok = worst_gap <= report.pathwise_threshold;

    // Bracket check: realized quadratic variation of M[u] vs the Gamma
    // integral along the same paths.
    auto dm_u = martingale_path(model, u, ens);
    const TestFunction u_sq = u.product(u);
    std::vector<double> diff(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        double qv = 0.0, gi = 0.0;
        for (std::size_t c = s_idx; c < clock.cells(); ++c) {
            qv += dm_u(p, c) * dm_u(p, c);
            const double t = clock.time(c);
            const auto x = ens.state(p, c);
            const double gamma = apply_generator(model, u_sq, t, x) -
                                 2.0 * u.value(t, x) * apply_generator(model, u, t, x);
            gi += gamma * clock.dv(c);
        }
        diff[p] = qv - gi;
    }
    double mean_d = 0.0;
    for (double d : diff) mean_d += d;
    mean_d /= static_cast<double>(n);
    double var_d = 0.0;
    for (double d : diff) var_d += (d - mean_d) * (d - mean_d);
    const double se_d = std::sqrt(var_d / static_cast<double>(n - 1) / static_cast<double>(n));
    report.bracket_gap = std::fabs(mean_d);
    report.bracket_threshold = 3.0 * se_d + budgets.bracket;
    report.bracket_ok = report.bracket_gap <= report.bracket_threshold;

    report.pass = report.residual_ok && report.pathwise_ok && report.bracket_ok;
    return report;
}

/// Monte-Carlo estimate of the potential measure U(s, x, A): expected
/// dV-occupation of the set A by (t, X_t) after the start.
struct PotentialEstimate {
    double value = 0.0;
    double stderr_value = 0.0;
};

inline PotentialEstimate estimate_potential(
    const ForwardModel& model, double start_time, std::span<const double> start_state,
    const std::function<bool(double, std::span<const double>)>& indicator, std::size_t n_paths,
    std::uint64_t seed) {
    auto ens = sample_paths(model, start_time, start_state, n_paths, seed);
    const Clock& clock = ens.clock();
    const std::size_t s_idx = ens.start_index();
    std::vector<double> occ(n_paths, 0.0);
    for (std::size_t p = 0; p < n_paths; ++p)
        for (std::size_t c = s_idx; c < clock.cells(); ++c)
            if (indicator(clock.time(c), ens.state(p, c))) occ[p] += clock.dv(c);
    double mean = 0.0;
    for (double o : occ) mean += o;
    mean /= static_cast<double>(n_paths);
    double var = 0.0;
    for (double o : occ) var += (o - mean) * (o - mean);
    PotentialEstimate est;
    est.value = mean;
    est.stderr_value = n_paths > 1
                           ? std::sqrt(var / static_cast<double>(n_paths - 1) /
                                       static_cast<double>(n_paths))
                           : 0.0;
    return est;
}

}  // namespace bsdelab
