#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "bsdelab/errors.hpp"

namespace bsdelab {

/// Discrete representation of the deterministic clock: a non-decreasing
/// function V on a strictly increasing time grid t_0 = 0 < ... < t_N = T.
/// All dV-integrals in the library discretize against its cell increments.
class Clock {
public:
    /// Builds the clock from grid times and clock values. Validates
    /// V(t_0) = 0, non-decreasing V, strictly increasing grid and,
    /// when a finite bound is supplied, V(T) <= v_max.
    Clock(std::vector<double> times, std::vector<double> values,
          double v_max = std::numeric_limits<double>::infinity())
        : times_(std::move(times)), values_(std::move(values)), v_max_(v_max) {
        if (times_.size() < 2) throw domain_error("Clock: grid needs at least two nodes");
        if (times_.size() != values_.size()) throw alignment_error("Clock: grid/value size mismatch");
        if (times_.front() != 0.0) throw domain_error("Clock: grid must start at t = 0");
        if (values_.front() != 0.0) throw domain_error("Clock: V(0) must be 0");
        for (std::size_t k = 1; k < times_.size(); ++k) {
            if (!(times_[k] > times_[k - 1])) throw domain_error("Clock: grid not strictly increasing");
            if (values_[k] < values_[k - 1]) throw domain_error("Clock: V not non-decreasing");
            if (!std::isfinite(values_[k])) throw domain_error("Clock: non-finite V value");
        }
        if (values_.back() > v_max_) throw domain_error("Clock: V(T) exceeds declared bound");
    }

    /// Uniform grid with V(t) = t.
    static Clock linear(double horizon, std::size_t steps) {
        std::vector<double> t(steps + 1), v(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) {
            t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
            v[k] = t[k];
        }
        t.back() = horizon;
        v.back() = horizon;
        return Clock(std::move(t), std::move(v));
    }

    std::size_t cells() const { return times_.size() - 1; }
    std::size_t nodes() const { return times_.size(); }
    double horizon() const { return times_.back(); }

    double time(std::size_t k) const { return times_[k]; }
    double value(std::size_t k) const { return values_[k]; }
    /// Increment over cell j, i.e. V(t_{j+1}) - V(t_j), j in [0, cells()).
    double dv(std::size_t j) const { return values_[j + 1] - values_[j]; }
    double total_mass() const { return values_.back(); }

    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& values() const { return values_; }

    /// Grid index of a time that must coincide with a node.
    std::size_t index_of(double t) const {
        const double tol = 1e-12 * std::max(1.0, horizon());
        for (std::size_t k = 0; k < times_.size(); ++k)
            if (std::fabs(times_[k] - t) <= tol) return k;
        throw alignment_error("Clock: time " + std::to_string(t) + " is not a grid node");
    }

    bool same_grid(const Clock& other) const {
        return times_ == other.times_ && values_ == other.values_;
    }

private:
    std::vector<double> times_;
    std::vector<double> values_;
    double v_max_;
};

}  // namespace bsdelab
