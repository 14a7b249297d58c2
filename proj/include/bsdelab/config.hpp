#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsdelab/bsde.hpp"
#include "bsdelab/clock.hpp"
#include "bsdelab/driver.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/expr.hpp"
#include "bsdelab/forward_model.hpp"
#include "bsdelab/pseudo_pde.hpp"
#include "bsdelab/verification.hpp"

namespace bsdelab {

/// Parsed run configuration. `effective` is the input with every defaulted
/// field filled in, echoed to the output directory for reproducibility.
struct RunConfig {
    nlohmann::json effective;
    Clock clock = Clock::linear(1.0, 1);
    std::size_t dim = 1;
    ForwardModel model = ForwardModel::brownian(Clock::linear(1.0, 1), 1,
                                                DiffusionCoeffs::scalar(0.0, 1.0));
    Driver driver;
    SolverConfig solver;
    std::vector<StartNode> nodes;
    // verify subcommand
    std::string candidate = "heat_quadratic";
    double candidate_shift = 0.0;
    VerifyBudgets budgets;
    // gamma-check subcommand
    std::vector<std::string> gamma_functions;
};

namespace detail {

inline double get_num(const nlohmann::json& j, const std::string& key, double fallback,
                      nlohmann::json& echo) {
    const double v = j.contains(key) ? j.at(key).get<double>() : fallback;
    echo[key] = v;
    return v;
}

/// Scalar coefficient as a number or a polynomial expression in (t, x...).
inline std::function<double(double, std::span<const double>)> coeff_fn(
    const nlohmann::json& j, const std::string& key, double fallback, std::size_t dim,
    nlohmann::json& echo) {
    if (!j.contains(key) || j.at(key).is_number()) {
        const double v = j.contains(key) ? j.at(key).get<double>() : fallback;
        echo[key] = v;
        return [v](double, std::span<const double>) { return v; };
    }
    const std::string text = j.at(key).get<std::string>();
    echo[key] = text;
    std::vector<std::string> vars{"t", "x"};
    for (std::size_t i = 1; i <= dim; ++i) vars.push_back("x_" + std::to_string(i));
    PolyExpr e = PolyExpr::parse(text, vars);
    return [e, dim](double t, std::span<const double> x) {
        std::vector<double> vals(2 + dim);
        vals[0] = t;
        vals[1] = x[0];
        for (std::size_t i = 0; i < dim; ++i) vals[2 + i] = x[i];
        return e.eval(vals);
    };
}

inline Clock parse_clock(const nlohmann::json& j, nlohmann::json& echo) {
    const nlohmann::json c = j.value("clock", nlohmann::json::object());
    nlohmann::json ec;
    if (c.contains("times") || c.contains("values")) {
        if (!c.contains("times") || !c.contains("values"))
            throw config_error("clock: a table needs both 'times' and 'values'");
        auto times = c.at("times").get<std::vector<double>>();
        auto values = c.at("values").get<std::vector<double>>();
        ec["times"] = times;
        ec["values"] = values;
        echo["clock"] = ec;
        try {
            return Clock(std::move(times), std::move(values));
        } catch (const std::exception& e) {
            throw config_error(std::string("clock: ") + e.what());
        }
    }
    const double horizon = c.value("horizon", 1.0);
    const auto steps = c.value("steps", std::size_t{50});
    ec["horizon"] = horizon;
    ec["steps"] = steps;
    echo["clock"] = ec;
    if (!(horizon > 0.0)) throw config_error("clock.horizon: must be positive");
    if (steps < 1) throw config_error("clock.steps: must be at least 1");
    return Clock::linear(horizon, steps);
}

inline ForwardModel parse_model(const nlohmann::json& j, const Clock& clock, std::size_t& dim,
                                nlohmann::json& echo) {
    const nlohmann::json m = j.value("model", nlohmann::json::object());
    nlohmann::json em;
    const std::string kind = m.value("kind", std::string("brownian"));
    em["kind"] = kind;
    dim = m.value("dim", std::size_t{1});
    em["dim"] = dim;
    if (dim < 1) throw config_error("model.dim: must be at least 1");

    if (kind == "brownian" || kind == "jump") {
        DiffusionCoeffs coeffs;
        if (dim == 1) {
            auto mu = coeff_fn(m, "mu", 0.0, 1, em);
            auto sg = coeff_fn(m, "sigma", 1.0, 1, em);
            coeffs.drift = [mu](double t, std::span<const double> x, std::span<double> out) {
                out[0] = mu(t, x);
            };
            coeffs.diffusion = [sg](double t, std::span<const double> x, std::span<double> out) {
                out[0] = sg(t, x);
            };
        } else {
            auto mu = m.value("mu", std::vector<double>(dim, 0.0));
            auto sg = m.value("sigma", std::vector<double>{});
            if (mu.size() != dim) throw config_error("model.mu: needs dim entries");
            if (sg.empty()) {  // identity diffusion
                sg.assign(dim * dim, 0.0);
                for (std::size_t i = 0; i < dim; ++i) sg[i * dim + i] = 1.0;
            }
            if (sg.size() != dim * dim)
                throw config_error("model.sigma: needs dim*dim entries (row-major)");
            em["mu"] = mu;
            em["sigma"] = sg;
            coeffs = DiffusionCoeffs::constant(std::move(mu), std::move(sg));
        }
        if (kind == "brownian") {
            echo["model"] = em;
            return ForwardModel::brownian(clock, dim, std::move(coeffs));
        }
        JumpCoeffs jumps;
        auto rate = coeff_fn(m, "rate", 0.5, dim == 1 ? 1 : dim, em);
        jumps.rate = rate;
        jumps.jump_mean = m.value("jump_mean", std::vector<double>(dim, 0.0));
        jumps.jump_std = m.value("jump_std", std::vector<double>(dim, 0.1));
        jumps.quad_order = m.value("quad_order", 24);
        if (jumps.jump_mean.size() != dim) throw config_error("model.jump_mean: needs dim entries");
        if (jumps.jump_std.size() != dim) throw config_error("model.jump_std: needs dim entries");
        em["jump_mean"] = jumps.jump_mean;
        em["jump_std"] = jumps.jump_std;
        em["quad_order"] = jumps.quad_order;
        echo["model"] = em;
        return ForwardModel::jump_diffusion(clock, dim, std::move(coeffs), std::move(jumps));
    }
    if (kind == "alpha_stable") {
        StableCoeffs sc;
        sc.alpha = get_num(m, "alpha", 1.5, em);
        sc.scale = get_num(m, "scale", 1.0, em);
        sc.inner_cut = get_num(m, "inner", 1e-4, em);
        sc.outer_cut = get_num(m, "outer", 1e4, em);
        sc.truncated = m.value("truncated", false);
        sc.quad_points = m.value("quad_points", 400);
        sc.tail_tol = get_num(m, "tail_tol", 1e-6, em);
        em["truncated"] = sc.truncated;
        em["quad_points"] = sc.quad_points;
        echo["model"] = em;
        if (sc.alpha <= 0.0 || sc.alpha > 2.0)
            throw config_error("model.alpha: must lie in (0, 2], got " + std::to_string(sc.alpha));
        if (dim != 1) throw config_error("model.dim: alpha_stable supports dim = 1 only");
        return ForwardModel::alpha_stable(clock, sc);
    }
    throw config_error("model.kind: unknown kind '" + kind + "'");
}

inline Driver parse_driver(const nlohmann::json& j, std::size_t dim, nlohmann::json& echo) {
    const nlohmann::json d = j.value("driver", nlohmann::json::object());
    nlohmann::json ed;
    const std::string kind = d.value("kind", std::string("zero"));
    ed["kind"] = kind;

    Driver driver;
    double default_lip_y = 0.0, default_lip_z = 0.0;
    if (kind == "zero") {
        driver.f = [](double, std::span<const double>, double, double) { return 0.0; };
    } else if (kind == "constant") {
        const double value = get_num(d, "value", 1.0, ed);
        driver.f = [value](double, std::span<const double>, double, double) { return value; };
    } else if (kind == "linear") {
        const double ay = get_num(d, "ay", -1.0, ed);
        const double bz = get_num(d, "bz", 0.0, ed);
        const double c0 = get_num(d, "c", 0.0, ed);
        driver.f = [ay, bz, c0](double, std::span<const double>, double y, double z) {
            return ay * y + bz * z + c0;
        };
        default_lip_y = std::fabs(ay);
        default_lip_z = std::fabs(bz);
    } else if (kind == "sin_cos") {
        const double ya = get_num(d, "ya", 1.0, ed);
        const double za = get_num(d, "za", 0.5, ed);
        driver.f = [ya, za](double, std::span<const double>, double y, double z) {
            return ya * std::sin(y) + za * std::cos(z);
        };
        default_lip_y = std::fabs(ya);
        default_lip_z = std::fabs(za);
    } else if (kind == "expr") {
        if (!d.contains("f")) throw config_error("driver.f: expression required for kind 'expr'");
        const std::string text = d.at("f").get<std::string>();
        ed["f"] = text;
        std::vector<std::string> vars{"t", "x", "y", "z"};
        for (std::size_t i = 1; i <= dim; ++i) vars.push_back("x_" + std::to_string(i));
        PolyExpr e = PolyExpr::parse(text, vars);
        driver.f = [e, dim](double t, std::span<const double> x, double y, double z) {
            std::vector<double> vals(4 + dim);
            vals[0] = t;
            vals[1] = x[0];
            vals[2] = y;
            vals[3] = z;
            for (std::size_t i = 0; i < dim; ++i) vals[4 + i] = x[i];
            return e.eval(vals);
        };
        if (!d.contains("lip_y") || !d.contains("lip_z"))
            throw config_error("driver.lip_y/lip_z: required for expression drivers");
    } else {
        throw config_error("driver.kind: unknown kind '" + kind + "'");
    }
    driver.lip_y = get_num(d, "lip_y", default_lip_y, ed);
    driver.lip_z = get_num(d, "lip_z", default_lip_z, ed);
    if (driver.lip_y < 0.0 || driver.lip_z < 0.0)
        throw config_error("driver.lip_y/lip_z: must be nonnegative");

    const std::string g_text = d.value("g", std::string("x^2"));
    ed["g"] = g_text;
    std::vector<std::string> gvars{"x"};
    for (std::size_t i = 1; i <= dim; ++i) gvars.push_back("x_" + std::to_string(i));
    PolyExpr g = PolyExpr::parse(g_text, gvars);
    driver.terminal = [g, dim](std::span<const double> x) {
        std::vector<double> vals(1 + dim);
        vals[0] = x[0];
        for (std::size_t i = 0; i < dim; ++i) vals[1 + i] = x[i];
        return g.eval(vals);
    };
    echo["driver"] = ed;
    return driver;
}

inline SolverConfig parse_solver(const nlohmann::json& j, std::size_t dim, nlohmann::json& echo) {
    const nlohmann::json s = j.value("solver", nlohmann::json::object());
    nlohmann::json es;
    SolverConfig cfg;
    cfg.n_paths = s.value("paths", std::size_t{10000});
    cfg.max_iters = s.value("max_iters", 20);
    cfg.tol = s.value("tol", 1e-4);
    cfg.seed = s.value("seed", std::uint64_t{1});
    cfg.ridge_scale = s.value("ridge", 1e-8);
    cfg.lambda = s.value("lambda", -1.0);
    es["paths"] = cfg.n_paths;
    es["max_iters"] = cfg.max_iters;
    es["tol"] = cfg.tol;
    es["seed"] = cfg.seed;
    es["ridge"] = cfg.ridge_scale;
    es["lambda"] = cfg.lambda;
    if (cfg.n_paths < 2) throw config_error("solver.paths: need at least 2 paths");
    if (cfg.max_iters < 1) throw config_error("solver.max_iters: must be positive");
    if (!(cfg.tol > 0.0)) throw config_error("solver.tol: must be positive");
    if (cfg.ridge_scale < 0.0) throw config_error("solver.ridge: must be nonnegative");

    const nlohmann::json b = s.value("basis", nlohmann::json::object());
    nlohmann::json eb;
    const std::string family = b.value("family", std::string("polynomial"));
    eb["family"] = family;
    if (family == "polynomial") {
        const auto degree = b.value("degree", dim == 1 ? std::size_t{4} : std::size_t{2});
        eb["degree"] = degree;
        cfg.basis = RegressionBasis::polynomial(dim, degree);
    } else if (family == "local_partition") {
        const auto bins = b.value("bins", std::size_t{8});
        eb["bins"] = bins;
        if (bins < 1) throw config_error("solver.basis.bins: must be positive");
        cfg.basis = RegressionBasis::local_partition(dim, bins);
    } else {
        throw config_error("solver.basis.family: unknown family '" + family + "'");
    }
    es["basis"] = eb;
    echo["solver"] = es;
    return cfg;
}

inline std::vector<StartNode> parse_nodes(const nlohmann::json& j, std::size_t dim,
                                          nlohmann::json& echo) {
    std::vector<StartNode> nodes;
    nlohmann::json en = nlohmann::json::array();
    if (!j.contains("nodes")) {
        echo["nodes"] = en;
        return nodes;
    }
    for (const auto& item : j.at("nodes")) {
        StartNode node;
        node.s = item.value("s", 0.0);
        node.x = item.value("x", std::vector<double>(dim, 0.0));
        if (node.x.size() != dim) throw config_error("nodes.x: needs dim entries");
        en.push_back({{"s", node.s}, {"x", node.x}});
        nodes.push_back(std::move(node));
    }
    echo["nodes"] = en;
    return nodes;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig rc;
    rc.effective = nlohmann::json::object();
    rc.clock = detail::parse_clock(j, rc.effective);
    rc.model = detail::parse_model(j, rc.clock, rc.dim, rc.effective);
    rc.driver = detail::parse_driver(j, rc.dim, rc.effective);
    rc.solver = detail::parse_solver(j, rc.dim, rc.effective);
    rc.nodes = detail::parse_nodes(j, rc.dim, rc.effective);

    const nlohmann::json v = j.value("verify", nlohmann::json::object());
    nlohmann::json ev;
    rc.candidate = v.value("candidate", std::string("heat_quadratic"));
    rc.candidate_shift = v.value("shift", 0.0);
    ev["candidate"] = rc.candidate;
    ev["shift"] = rc.candidate_shift;
    const nlohmann::json b = v.value("budgets", nlohmann::json::object());
    rc.budgets.residual_threshold = b.value("residual", 1e-4);
    rc.budgets.pathwise = b.value("pathwise", 0.05);
    rc.budgets.bracket = b.value("bracket", 0.1);
    ev["budgets"] = {{"residual", rc.budgets.residual_threshold},
                     {"pathwise", rc.budgets.pathwise},
                     {"bracket", rc.budgets.bracket}};
    rc.effective["verify"] = ev;

    const nlohmann::json g = j.value("gamma", nlohmann::json::object());
    rc.gamma_functions =
        g.value("functions", std::vector<std::string>{"constant", "linear", "quadratic"});
    rc.effective["gamma"] = {{"functions", rc.gamma_functions}};
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
    return parse_run_config(j);
}

}  // namespace bsdelab
