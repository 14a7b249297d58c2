#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bsdelab/clock.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/measure.hpp"
#include "bsdelab/path_ensemble.hpp"
#include "bsdelab/pseudo_pde.hpp"

namespace bsdelab {

/// All floats serialize with 17 significant digits so runs reproduce byte
/// for byte.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot open output file: " + path);
    return f;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open input file: " + path);
    return f;
}

}  // namespace detail

inline void write_measure_csv(const std::string& path, const DiscreteMeasurePath& m) {
    auto f = detail::open_out(path);
    f << "cell_index,pos_mass,neg_mass\n";
    for (std::size_t k = 0; k < m.cells(); ++k)
        f << k << ',' << fmt17(m.pos(k)) << ',' << fmt17(m.neg(k)) << '\n';
}

inline DiscreteMeasurePath read_measure_csv(const std::string& path) {
    auto f = detail::open_in(path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("cell_index,pos_mass,neg_mass", 0) != 0)
        throw config_error("measure file " + path + ": expected header cell_index,pos_mass,neg_mass");
    std::vector<double> pos, neg;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3) throw config_error("measure file " + path + ": malformed row");
        pos.push_back(std::stod(fields[1]));
        neg.push_back(std::stod(fields[2]));
    }
    return DiscreteMeasurePath(std::move(pos), std::move(neg));
}

inline void write_clock_csv(const std::string& path, const Clock& clock) {
    auto f = detail::open_out(path);
    f << "t,V\n";
    for (std::size_t k = 0; k < clock.nodes(); ++k)
        f << fmt17(clock.time(k)) << ',' << fmt17(clock.value(k)) << '\n';
}

inline Clock read_clock_csv(const std::string& path) {
    auto f = detail::open_in(path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("t,V", 0) != 0)
        throw config_error("clock file " + path + ": expected header t,V");
    std::vector<double> t, v;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 2) throw config_error("clock file " + path + ": malformed row");
        t.push_back(std::stod(fields[0]));
        v.push_back(std::stod(fields[1]));
    }
    return Clock(std::move(t), std::move(v));
}

inline void write_density_csv(const std::string& path, const Decomposition& dec) {
    auto f = detail::open_out(path);
    f << "cell_index,density,K\n";
    for (std::size_t k = 0; k < dec.density.size(); ++k)
        f << k << ',' << fmt17(dec.density[k]) << ',' << fmt17(dec.indicator[k]) << '\n';
}

inline void write_solution_csv(const std::string& path, const SolutionField& field,
                               std::size_t dim) {
    auto f = detail::open_out(path);
    f << 's';
    for (std::size_t i = 1; i <= dim; ++i) f << ",x_" << i;
    f << ",u,v,stderr_u\n";
    for (const auto& pt : field.points) {
        f << fmt17(pt.node.s);
        for (std::size_t i = 0; i < dim; ++i) f << ',' << fmt17(pt.node.x[i]);
        f << ',' << fmt17(pt.u) << ',' << fmt17(pt.v) << ',' << fmt17(pt.stderr_u) << '\n';
    }
}

inline void write_residual_csv(const std::string& path, const ResidualField& field,
                               std::size_t dim) {
    auto f = detail::open_out(path);
    f << 't';
    for (std::size_t i = 1; i <= dim; ++i) f << ",x_" << i;
    f << ",residual\n";
    for (const auto& e : field.entries) {
        f << fmt17(e.t);
        for (std::size_t i = 0; i < dim; ++i) f << ',' << fmt17(e.x[i]);
        f << ',' << fmt17(e.residual) << '\n';
    }
}

/// Diagnostic dump of the per-time regression coefficients of an iterate.
inline void write_coefficients_csv(const std::string& path, const BsdeIterate& iterate) {
    auto f = detail::open_out(path);
    f << "node,coef_index,value\n";
    for (std::size_t k = 0; k < iterate.fits.size(); ++k) {
        if (!iterate.fits[k]) continue;
        const auto& coef = iterate.fits[k]->coefficients();
        for (std::size_t j = 0; j < coef.size(); ++j)
            f << k << ',' << j << ',' << fmt17(coef[j]) << '\n';
    }
}

/// Debug export of simulated trajectories.
inline void write_ensemble_csv(const std::string& path, const PathEnsemble& ens,
                               std::size_t max_paths) {
    auto f = detail::open_out(path);
    f << "path_id,t";
    for (std::size_t i = 1; i <= ens.dim(); ++i) f << ",x_" << i;
    f << '\n';
    const std::size_t count = std::min(max_paths, ens.n_paths());
    for (std::size_t p = 0; p < count; ++p)
        for (std::size_t k = 0; k < ens.clock().nodes(); ++k) {
            f << p << ',' << fmt17(ens.clock().time(k));
            for (std::size_t i = 0; i < ens.dim(); ++i) f << ',' << fmt17(ens.state(p, k)[i]);
            f << '\n';
        }
}

}  // namespace bsdelab
