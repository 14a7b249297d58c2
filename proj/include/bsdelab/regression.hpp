#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsdelab/errors.hpp"

namespace bsdelab {

/// Basis family for least-squares conditional expectations: multivariate
/// polynomials of bounded total degree, or a uniform partition with a
/// per-bin affine fit. States are normalized to [-1, 1] per component;
/// bounds default to the sample range of each fit.
struct RegressionBasis {
    enum class Family { polynomial, local_partition };

    Family family = Family::polynomial;
    std::size_t dim = 1;
    std::size_t degree = 4;  // total degree for the polynomial family
    std::size_t n_bins = 8;  // per dimension for the local partition
    // Optional fixed normalization bounds (lo, hi per component).
    std::vector<double> lo;
    std::vector<double> hi;

    static RegressionBasis polynomial(std::size_t dim, std::size_t degree) {
        RegressionBasis b;
        b.family = Family::polynomial;
        b.dim = dim;
        b.degree = degree;
        return b;
    }

    static RegressionBasis local_partition(std::size_t dim, std::size_t n_bins) {
        RegressionBasis b;
        b.family = Family::local_partition;
        b.dim = dim;
        b.n_bins = n_bins;
        return b;
    }

    /// Default per the solver: degree 4 in d = 1, total degree 2 above.
    static RegressionBasis default_for(std::size_t dim) {
        return polynomial(dim, dim == 1 ? 4 : 2);
    }
};

namespace detail {

/// Multi-indices of total degree <= degree in `dim` variables,
/// graded order, constant term first.
inline std::vector<std::vector<unsigned>> poly_exponents(std::size_t dim, std::size_t degree) {
    std::vector<std::vector<unsigned>> out;
    std::vector<unsigned> idx(dim, 0);
    auto total = [&]() {
        unsigned s = 0;
        for (unsigned e : idx) s += e;
        return s;
    };
    for (std::size_t total_deg = 0; total_deg <= degree; ++total_deg) {
        // enumerate all idx with sum == total_deg
        std::fill(idx.begin(), idx.end(), 0u);
        idx[0] = static_cast<unsigned>(total_deg);
        while (true) {
            if (total() == total_deg) out.push_back(idx);
            // next composition
            std::size_t i = 0;
            while (i < dim && idx[i] == 0) ++i;
            if (i == dim || i + 1 == dim) break;
            const unsigned v = idx[i];
            idx[i] = 0;
            idx[0] = v - 1;
            ++idx[i + 1];
        }
    }
    return out;
}

}  // namespace detail

/// Basis with normalization bounds resolved against a concrete sample.
class ResolvedBasis {
public:
    ResolvedBasis(const RegressionBasis& spec, std::span<const double> states, std::size_t n,
                  std::size_t stride)
        : spec_(spec) {
        const std::size_t d = spec.dim;
        lo_.assign(d, 0.0);
        hi_.assign(d, 0.0);
        if (!spec.lo.empty()) {
            if (spec.lo.size() != d || spec.hi.size() != d)
                throw config_error("RegressionBasis: bounds dimension mismatch");
            lo_ = spec.lo;
            hi_ = spec.hi;
        } else {
            for (std::size_t i = 0; i < d; ++i) {
                double mn = states[i], mx = states[i];
                for (std::size_t p = 1; p < n; ++p) {
                    mn = std::min(mn, states[p * stride + i]);
                    mx = std::max(mx, states[p * stride + i]);
                }
                lo_[i] = mn;
                hi_[i] = mx;
            }
        }
        for (std::size_t i = 0; i < d; ++i)
            if (!(hi_[i] > lo_[i])) hi_[i] = lo_[i] + 1.0;  // degenerate (frozen) component
        if (spec.family == RegressionBasis::Family::polynomial)
            exponents_ = detail::poly_exponents(spec.dim, spec.degree);
    }

    std::size_t size() const {
        if (spec_.family == RegressionBasis::Family::polynomial) return exponents_.size();
        std::size_t bins = 1;
        for (std::size_t i = 0; i < spec_.dim; ++i) bins *= spec_.n_bins;
        return bins * (1 + spec_.dim);
    }

    std::size_t dim() const { return spec_.dim; }

    /// Columns whose ridge penalty is skipped (constant terms).
    bool is_constant_column(std::size_t j) const {
        if (spec_.family == RegressionBasis::Family::polynomial) {
            for (unsigned e : exponents_[j])
                if (e != 0) return false;
            return true;
        }
        return j % (1 + spec_.dim) == 0;
    }

    void evaluate(std::span<const double> state, std::span<double> out) const {
        const std::size_t d = spec_.dim;
        std::vector<double> u(d);
        for (std::size_t i = 0; i < d; ++i)
            u[i] = -1.0 + 2.0 * (state[i] - lo_[i]) / (hi_[i] - lo_[i]);
        if (spec_.family == RegressionBasis::Family::polynomial) {
            for (std::size_t j = 0; j < exponents_.size(); ++j) {
                double v = 1.0;
                for (std::size_t i = 0; i < d; ++i)
                    for (unsigned e = 0; e < exponents_[j][i]; ++e) v *= u[i];
                out[j] = v;
            }
            return;
        }
        for (auto& v : out) v = 0.0;
        std::size_t bin = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const double pos = (u[i] + 1.0) / 2.0 * static_cast<double>(spec_.n_bins);
            auto b = static_cast<long>(std::floor(pos));
            b = std::clamp<long>(b, 0, static_cast<long>(spec_.n_bins) - 1);
            bin = bin * spec_.n_bins + static_cast<std::size_t>(b);
        }
        const std::size_t base = bin * (1 + d);
        out[base] = 1.0;
        for (std::size_t i = 0; i < d; ++i) out[base + 1 + i] = u[i];
    }

private:
    RegressionBasis spec_;
    std::vector<double> lo_, hi_;
    std::vector<std::vector<unsigned>> exponents_;
};

/// Least-squares fit of targets on basis functions of the state, with an
/// optional ridge penalty on the non-constant columns. Prediction at the
/// training states is the orthogonal projection of the targets.
class FittedRegression {
public:
    FittedRegression(ResolvedBasis basis, std::vector<double> coefficients, double residual_norm)
        : basis_(std::move(basis)), coef_(std::move(coefficients)), residual_norm_(residual_norm) {}

    const std::vector<double>& coefficients() const { return coef_; }
    double residual_norm() const { return residual_norm_; }
    const ResolvedBasis& basis() const { return basis_; }

    double predict_one(std::span<const double> state) const {
        std::vector<double> b(coef_.size());
        basis_.evaluate(state, b);
        double acc = 0.0;
        for (std::size_t j = 0; j < coef_.size(); ++j) acc += coef_[j] * b[j];
        return acc;
    }

    /// states: n rows of `stride` doubles each, first dim() used.
    std::vector<double> predict(std::span<const double> states, std::size_t n,
                                std::size_t stride) const {
        std::vector<double> out(n);
        std::vector<double> b(coef_.size());
        for (std::size_t p = 0; p < n; ++p) {
            basis_.evaluate(states.subspan(p * stride, basis_.dim()), b);
            double acc = 0.0;
            for (std::size_t j = 0; j < coef_.size(); ++j) acc += coef_[j] * b[j];
            out[p] = acc;
        }
        return out;
    }

private:
    ResolvedBasis basis_;
    std::vector<double> coef_;
    double residual_norm_;
};

namespace detail {

struct NormalEquations {
    Eigen::MatrixXd gram;       // X^T X (+ ridge on non-constant diagonal)
    Eigen::LDLT<Eigen::MatrixXd> factor;
    ResolvedBasis basis;
    std::size_t n = 0;
};

/// Builds and factors the (ridge-regularized) normal matrix for a sample of
/// states. Rank deficiency without ridge raises singular_error.
inline NormalEquations build_normal_equations(std::span<const double> states, std::size_t n,
                                              std::size_t stride, const RegressionBasis& spec,
                                              double ridge) {
    if (n < 1) throw domain_error("regression: empty sample");
    if (ridge < 0.0) throw domain_error("regression: ridge must be nonnegative");
    ResolvedBasis basis(spec, states, n, stride);
    const std::size_t m = basis.size();
    if (n < m) throw domain_error("regression: fewer samples than basis functions");

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> b(m);
    for (std::size_t p = 0; p < n; ++p) {
        basis.evaluate(states.subspan(p * stride, basis.dim()), b);
        for (std::size_t i = 0; i < m; ++i) {
            if (b[i] == 0.0) continue;
            for (std::size_t j = i; j < m; ++j) gram(i, j) += b[i] * b[j];
        }
    }
    gram = gram.selfadjointView<Eigen::Upper>();

    double max_diag = 0.0;
    for (std::size_t j = 0; j < m; ++j) max_diag = std::max(max_diag, gram(j, j));
    for (std::size_t j = 0; j < m; ++j) {
        if (!basis.is_constant_column(j)) {
            gram(j, j) += ridge;
        } else if (ridge > 0.0 && gram(j, j) == 0.0) {
            gram(j, j) = 1.0;  // empty partition bin: pin its coefficient to 0
        }
    }

    NormalEquations ne{std::move(gram), {}, std::move(basis), n};
    ne.factor.compute(ne.gram);
    const auto& d = ne.factor.vectorD();
    const double dmax = d.maxCoeff();
    if (ne.factor.info() != Eigen::Success || d.minCoeff() <= dmax * 1e-13)
        throw singular_error(
            "regression: rank-deficient normal equations; a positive ridge is required");
    return ne;
}

inline FittedRegression solve_one(const NormalEquations& ne, std::span<const double> states,
                                  std::size_t stride, std::span<const double> targets) {
    const std::size_t m = ne.basis.size();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    std::vector<double> b(m);
    for (std::size_t p = 0; p < ne.n; ++p) {
        ne.basis.evaluate(states.subspan(p * stride, ne.basis.dim()), b);
        for (std::size_t j = 0; j < m; ++j) rhs(j) += b[j] * targets[p];
    }
    Eigen::VectorXd coef = ne.factor.solve(rhs);
    double ss_res = 0.0;
    for (std::size_t p = 0; p < ne.n; ++p) {
        ne.basis.evaluate(states.subspan(p * stride, ne.basis.dim()), b);
        double pred = 0.0;
        for (std::size_t j = 0; j < m; ++j) pred += coef(j) * b[j];
        const double e = targets[p] - pred;
        ss_res += e * e;
    }
    return FittedRegression(ne.basis, std::vector<double>(coef.data(), coef.data() + m),
                            std::sqrt(ss_res));
}

}  // namespace detail

/// Least-squares conditional expectation: fit `targets` on basis functions
/// of `states` (n rows, `stride` doubles per row). Deterministic given its
/// inputs.
inline FittedRegression fit(std::span<const double> targets, std::span<const double> states,
                            std::size_t n, std::size_t stride, const RegressionBasis& basis,
                            double ridge) {
    if (targets.size() != n) throw alignment_error("regression: target/state count mismatch");
    auto ne = detail::build_normal_equations(states, n, stride, basis, ridge);
    return detail::solve_one(ne, states, stride, targets);
}

inline std::vector<double> predict(const FittedRegression& f, std::span<const double> states,
                                   std::size_t n, std::size_t stride) {
    return f.predict(states, n, stride);
}

}  // namespace bsdelab
