#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsdelab/bsde.hpp"
#include "bsdelab/config.hpp"
#include "bsdelab/csv.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/measure.hpp"
#include "bsdelab/pseudo_pde.hpp"
#include "bsdelab/test_function.hpp"
#include "bsdelab/verification.hpp"

namespace bsdelab {

namespace detail {

inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot open output file: " + path.string());
    f << j.dump(2) << '\n';
}

inline nlohmann::json report_json(const ConvergenceReport& r) {
    return {{"iterations", r.iterations}, {"converged", r.converged},
            {"lambda", r.lambda},         {"diff_norms_sq", r.diff_norms_sq},
            {"ratios", r.ratios},         {"clip_counts", r.clip_counts},
            {"wall_ms", r.wall_ms}};
}

inline Oracle candidate_oracle(const RunConfig& rc) {
    const double horizon = rc.clock.horizon();
    if (rc.candidate == "heat_quadratic") return Oracle::heat(horizon, 1.0);
    if (rc.candidate == "linear_driver_ode") return Oracle::linear_ode(-1.0, 1.0, horizon);
    throw config_error("verify.candidate: unknown candidate '" + rc.candidate + "'");
}

inline TestFunction shifted_candidate(const Oracle& oracle, double shift) {
    auto base = oracle.as_test_function();
    if (shift == 0.0) return base;
    auto val = [base, shift](double t, std::span<const double> x) {
        return base.value(t, x) + shift;
    };
    auto dt = [base](double t, std::span<const double> x) { return base.time_deriv(t, x); };
    auto grad = [base](double t, std::span<const double> x, std::span<double> out) {
        base.gradient(t, x, out);
    };
    auto hess = [base](double t, std::span<const double> x, std::span<double> out) {
        base.hessian(t, x, out);
    };
    return TestFunction::analytic(1, val, dt, grad, hess);
}

}  // namespace detail

/// solve: extract (u, v) on the configured nodes, write solution.csv,
/// convergence.json and the effective config echo. Returns 0, or 2 when
/// any node solve failed (details land in convergence.json).
inline int run_solve(const RunConfig& rc, const std::filesystem::path& out_dir, unsigned threads,
                     std::size_t export_paths = 0) {
    if (rc.nodes.empty()) throw config_error("nodes: at least one node is required");
    std::filesystem::create_directories(out_dir);

    auto field = extract_solution(rc.driver, rc.model, rc.nodes, rc.solver, threads);
    field.config_digest = detail::fnv1a_hex(rc.effective.dump());

    write_solution_csv((out_dir / "solution.csv").string(), field, rc.dim);
    detail::write_json(out_dir / "config_echo.json", rc.effective);

    nlohmann::json conv;
    conv["config_digest"] = field.config_digest;
    conv["seed"] = field.seed;
    conv["max_cross_z"] = field.max_cross_z;
    conv["nodes"] = nlohmann::json::array();
    for (const auto& pt : field.points) {
        nlohmann::json n;
        n["s"] = pt.node.s;
        n["x"] = pt.node.x;
        n["ok"] = pt.ok;
        n["error"] = pt.error;
        n["cross_z"] = pt.cross_z;
        if (pt.ok) n["report"] = detail::report_json(pt.report);
        conv["nodes"].push_back(std::move(n));
    }
    detail::write_json(out_dir / "convergence.json", conv);

    if (export_paths > 0) {
        SolverConfig cfg = rc.solver;
        cfg.seed = mix_seed(rc.solver.seed, 0, 0);
        auto ens = sample_paths(rc.model, rc.nodes[0].s, rc.nodes[0].x, cfg.n_paths, cfg.seed);
        write_ensemble_csv((out_dir / "paths.csv").string(), ens, export_paths);
    }
    return field.all_ok() ? 0 : 2;
}

/// verify: classical residual over the nodes, the classical-vs-BSDE
/// comparison from the first node, and the martingale diagnostic of M[u].
/// Returns 0 when everything passes, 2 otherwise.
inline int run_verify(const RunConfig& rc, const std::filesystem::path& out_dir) {
    if (rc.nodes.empty()) throw config_error("nodes: at least one node is required");
    std::filesystem::create_directories(out_dir);

    const Oracle oracle = detail::candidate_oracle(rc);
    const TestFunction u = detail::shifted_candidate(oracle, rc.candidate_shift);
    const Driver driver = oracle.driver();

    auto residual = classical_residual(u, rc.model, driver, rc.nodes);
    write_residual_csv((out_dir / "residual.csv").string(), residual, rc.dim);

    auto verify = verify_classical_vs_bsde(u, driver, rc.model, rc.nodes[0], rc.solver, rc.budgets);

    auto ens = sample_paths(rc.model, rc.nodes[0].s, rc.nodes[0].x, rc.solver.n_paths,
                            rc.solver.seed);
    auto dm_u = martingale_path(rc.model, u, ens);
    auto diag = martingale_diagnostic(dm_u, ens, rc.solver.basis);
    const double diag_threshold = 5.0;

    nlohmann::json rep;
    rep["residual_max"] = residual.max_abs_residual;
    rep["terminal_gap"] = residual.terminal_gap;
    rep["gamma_clip_count"] = residual.clip_count;
    rep["verify"] = {{"pass", verify.pass},
                     {"residual_ok", verify.residual_ok},
                     {"pathwise_ok", verify.pathwise_ok},
                     {"bracket_ok", verify.bracket_ok},
                     {"pathwise_gap", verify.pathwise_gap},
                     {"pathwise_threshold", verify.pathwise_threshold},
                     {"bracket_gap", verify.bracket_gap},
                     {"bracket_threshold", verify.bracket_threshold}};
    rep["martingale_diagnostic"] = {{"max_z", diag.max_z},
                                    {"worst_cell", diag.worst_cell},
                                    {"threshold", diag_threshold},
                                    {"pass", diag.passes(diag_threshold)}};
    const bool pass = verify.pass && diag.passes(diag_threshold);
    rep["pass"] = pass;
    detail::write_json(out_dir / "verify_report.json", rep);
    detail::write_json(out_dir / "config_echo.json", rc.effective);
    return pass ? 0 : 2;
}

/// decompose: file-level Lebesgue decomposition A against B.
inline int run_decompose(const std::string& a_file, const std::string& b_file,
                         const std::filesystem::path& out_dir) {
    auto A = read_measure_csv(a_file);
    auto B = read_measure_csv(b_file);
    auto dec = lebesgue_decompose(A, B);
    std::filesystem::create_directories(out_dir);
    write_density_csv((out_dir / "density.csv").string(), dec);
    write_measure_csv((out_dir / "singular.csv").string(), dec.singular);
    return 0;
}

/// gamma-check: tabulate the carre du champs on the named test functions
/// over the configured nodes.
inline int run_gamma_check(const RunConfig& rc, const std::filesystem::path& out_dir) {
    if (rc.nodes.empty()) throw config_error("nodes: at least one node is required");
    if (rc.gamma_functions.empty()) throw config_error("gamma.functions: list is empty");
    std::filesystem::create_directories(out_dir);

    std::ofstream f(out_dir / "gamma.csv");
    if (!f) throw config_error("cannot open output file: gamma.csv");
    f << 't';
    for (std::size_t i = 1; i <= rc.dim; ++i) f << ",x_" << i;
    f << ",phi,psi,gamma\n";
    for (const auto& node : rc.nodes) {
        for (std::size_t i = 0; i < rc.gamma_functions.size(); ++i) {
            for (std::size_t j = i; j < rc.gamma_functions.size(); ++j) {
                auto phi = named_test_function(rc.gamma_functions[i], rc.dim);
                auto psi = named_test_function(rc.gamma_functions[j], rc.dim);
                const double g = carre_du_champ(rc.model, phi, psi, node.s, node.x);
                f << fmt17(node.s);
                for (std::size_t k = 0; k < rc.dim; ++k) f << ',' << fmt17(node.x[k]);
                f << ',' << rc.gamma_functions[i] << ',' << rc.gamma_functions[j] << ','
                  << fmt17(g) << '\n';
            }
        }
    }
    detail::write_json(out_dir / "config_echo.json", rc.effective);
    return 0;
}

}  // namespace bsdelab
