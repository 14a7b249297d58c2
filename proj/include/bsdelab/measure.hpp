#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "bsdelab/array2d.hpp"
#include "bsdelab/clock.hpp"
#include "bsdelab/errors.hpp"

namespace bsdelab {

/// Atomic (purely discrete) signed measure on the cells of a clock grid,
/// stored in minimal Jordan form: per-cell nonnegative positive and
/// negative masses with pos_k * neg_k = 0. Construction cancels any
/// overlap so the total variation is canonical.
class DiscreteMeasurePath {
public:
    DiscreteMeasurePath() = default;

    DiscreteMeasurePath(std::vector<double> pos, std::vector<double> neg)
        : pos_(std::move(pos)), neg_(std::move(neg)) {
        if (pos_.size() != neg_.size())
            throw alignment_error("DiscreteMeasurePath: pos/neg size mismatch");
        for (std::size_t k = 0; k < pos_.size(); ++k) {
            if (pos_[k] < 0.0 || neg_[k] < 0.0)
                throw domain_error("DiscreteMeasurePath: part masses must be nonnegative");
            const double cancel = std::min(pos_[k], neg_[k]);
            pos_[k] -= cancel;
            neg_[k] -= cancel;
        }
    }

    /// Nonnegative measure from per-cell masses.
    static DiscreteMeasurePath nonnegative(std::vector<double> masses) {
        for (double m : masses)
            if (m < 0.0) throw domain_error("DiscreteMeasurePath: negative mass");
        std::vector<double> neg(masses.size(), 0.0);
        return DiscreteMeasurePath(std::move(masses), std::move(neg));
    }

    /// The clock increments dV as a nonnegative measure.
    static DiscreteMeasurePath from_clock(const Clock& clock) {
        std::vector<double> masses(clock.cells());
        for (std::size_t j = 0; j < clock.cells(); ++j) masses[j] = clock.dv(j);
        return DiscreteMeasurePath::nonnegative(std::move(masses));
    }

    std::size_t cells() const { return pos_.size(); }
    double pos(std::size_t k) const { return pos_[k]; }
    double neg(std::size_t k) const { return neg_[k]; }
    /// Signed cell mass a_k.
    double mass(std::size_t k) const { return pos_[k] - neg_[k]; }

    double total_variation() const {
        double tv = 0.0;
        for (std::size_t k = 0; k < pos_.size(); ++k) tv += pos_[k] + neg_[k];
        return tv;
    }

    double total_mass() const {
        double m = 0.0;
        for (std::size_t k = 0; k < pos_.size(); ++k) m += pos_[k] - neg_[k];
        return m;
    }

    bool is_nonnegative() const {
        for (double n : neg_)
            if (n > 0.0) return false;
        return true;
    }

    DiscreteMeasurePath operator+(const DiscreteMeasurePath& other) const {
        if (cells() != other.cells())
            throw alignment_error("DiscreteMeasurePath: grid mismatch in addition");
        std::vector<double> p(cells()), n(cells());
        for (std::size_t k = 0; k < cells(); ++k) {
            p[k] = pos_[k] + other.pos_[k];
            n[k] = neg_[k] + other.neg_[k];
        }
        return DiscreteMeasurePath(std::move(p), std::move(n));
    }

private:
    std::vector<double> pos_;
    std::vector<double> neg_;
};

/// Result of the exact cell-wise Lebesgue decomposition A = density.dB + singular.
/// `indicator` is the process K: K_k = 1 exactly on cells where dB_k = 0
/// (all singular mass lives there), K_k = 0 elsewhere.
struct Decomposition {
    std::vector<double> density;
    DiscreteMeasurePath singular;
    std::vector<double> indicator;
};

/// Exact Lebesgue decomposition of A against a nonnegative B on a shared grid.
/// On cells with dB_k > 0 the whole atom is absolutely continuous
/// (density_k = a_k / dB_k); on cells with dB_k = 0 the atom is singular and
/// the density is set to 0 by convention. Reconstruction
/// a_k = density_k * dB_k + singular_k holds to one rounding of the division.
inline Decomposition lebesgue_decompose(const DiscreteMeasurePath& A, const DiscreteMeasurePath& B) {
    if (A.cells() != B.cells())
        throw alignment_error("lebesgue_decompose: A and B live on different grids");
    if (!B.is_nonnegative())
        throw domain_error("lebesgue_decompose: B must be a nonnegative measure");

    const std::size_t n = A.cells();
    std::vector<double> density(n, 0.0), indicator(n, 0.0);
    std::vector<double> sing_pos(n, 0.0), sing_neg(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double db = B.pos(k);
        if (db > 0.0) {
            density[k] = (A.pos(k) - A.neg(k)) / db;
        } else {
            indicator[k] = 1.0;
            sing_pos[k] = A.pos(k);
            sing_neg[k] = A.neg(k);
        }
    }
    return Decomposition{std::move(density),
                         DiscreteMeasurePath(std::move(sing_pos), std::move(sing_neg)),
                         std::move(indicator)};
}

/// Integral of a nonnegative integrand against the absolutely continuous part,
/// sum_k phi_k * (dA/dB)_k * dB_k. Dominated by the integral against A itself;
/// the domination is asserted up to rounding.
inline double radon_nikodym_integral(std::span<const double> phi, const DiscreteMeasurePath& A,
                                     const DiscreteMeasurePath& B) {
    if (phi.size() != A.cells())
        throw alignment_error("radon_nikodym_integral: integrand/grid mismatch");
    if (!A.is_nonnegative())
        throw domain_error("radon_nikodym_integral: A must be nonnegative");
    for (double p : phi)
        if (p < 0.0) throw domain_error("radon_nikodym_integral: integrand must be nonnegative");

    const Decomposition dec = lebesgue_decompose(A, B);
    double integral = 0.0;
    double dominating = 0.0;
    for (std::size_t k = 0; k < A.cells(); ++k) {
        integral += phi[k] * dec.density[k] * B.pos(k);
        dominating += phi[k] * A.mass(k);
    }
    if (integral > dominating * (1.0 + 1e-12) + 1e-300)
        throw numeric_error("radon_nikodym_integral: domination inequality violated");
    return integral;
}

/// Splits per-path martingale increments along the indicator K from a
/// decomposition: the K < 1 part carries the dV-absolutely-continuous
/// piece, the K = 1 part the singular piece. The two parts sum back to
/// the input exactly.
inline std::pair<Array2D, Array2D> martingale_split(const Array2D& dm, std::span<const double> indicator) {
    if (indicator.size() != dm.cols())
        throw alignment_error("martingale_split: indicator/grid mismatch");
    for (double k : indicator)
        if (k < 0.0 || k > 1.0) throw domain_error("martingale_split: indicator outside [0,1]");

    Array2D ac(dm.rows(), dm.cols()), sing(dm.rows(), dm.cols());
    for (std::size_t p = 0; p < dm.rows(); ++p) {
        for (std::size_t k = 0; k < dm.cols(); ++k) {
            if (indicator[k] < 1.0)
                ac(p, k) = dm(p, k);
            else
                sing(p, k) = dm(p, k);
        }
    }
    return {std::move(ac), std::move(sing)};
}

}  // namespace bsdelab
