#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bsdelab {

/// Inputs live on different grids (cell counts or time nodes disagree).
struct alignment_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An input violates a mathematical precondition (negative mass, bad exponent, ...).
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A numerical procedure failed (quadrature tail above tolerance, NaN in a driver, ...).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Normal equations are rank deficient and no ridge was requested.
struct singular_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid run configuration; the message names the offending field.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Fixed-point iteration hit max_iters; carries the squared-norm history
/// of successive iterate differences and their ratios.
struct convergence_error : std::runtime_error {
    convergence_error(const std::string& what, std::vector<double> norms, std::vector<double> ratios)
        : std::runtime_error(what), diff_norms_sq(std::move(norms)), ratios(std::move(ratios)) {}

    std::vector<double> diff_norms_sq;
    std::vector<double> ratios;
};

}  // namespace bsdelab
