#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bsdelab/array2d.hpp"
#include "bsdelab/clock.hpp"
#include "bsdelab/errors.hpp"
#include "bsdelab/forward_model.hpp"
#include "bsdelab/rng.hpp"
#include "bsdelab/test_function.hpp"

namespace bsdelab {

/// Simulated forward trajectories under P^{s,x}: n_paths x (N+1) x d states
/// on the clock grid, frozen at x before the start time. Carries its seed
/// for provenance; identical (model, start, seed, n_paths) reproduce the
/// ensemble bitwise.
class PathEnsemble {
public:
    PathEnsemble(Clock clock, double start_time, std::vector<double> start_state,
                 std::size_t n_paths, std::uint64_t seed)
        : clock_(std::move(clock)),
          start_time_(start_time),
          start_state_(std::move(start_state)),
          n_paths_(n_paths),
          dim_(start_state_.size()),
          seed_(seed),
          start_index_(clock_.index_of(start_time)),
          data_(n_paths * clock_.nodes() * start_state_.size(), 0.0) {
        if (n_paths_ < 1) throw domain_error("PathEnsemble: need at least one path");
    }

    std::span<double> state(std::size_t path, std::size_t node) {
        return {data_.data() + (path * clock_.nodes() + node) * dim_, dim_};
    }
    std::span<const double> state(std::size_t path, std::size_t node) const {
        return {data_.data() + (path * clock_.nodes() + node) * dim_, dim_};
    }
    /// First state component; the common case d = 1.
    double state1(std::size_t path, std::size_t node) const {
        return data_[(path * clock_.nodes() + node) * dim_];
    }

    const Clock& clock() const { return clock_; }
    double start_time() const { return start_time_; }
    std::span<const double> start_state() const { return start_state_; }
    std::size_t n_paths() const { return n_paths_; }
    std::size_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t start_index() const { return start_index_; }

    std::span<const double> raw() const { return data_; }

    /// Copy of the ensemble with the backward-recursion anchor moved to a
    /// later grid time; the paths themselves are untouched. Used to check
    /// that solutions restricted to [s', T] coincide with solves anchored
    /// at s'.
    PathEnsemble section_from(double time) const {
        PathEnsemble out = *this;
        const std::size_t idx = clock_.index_of(time);
        if (idx < start_index_)
            throw domain_error("PathEnsemble::section_from: time precedes the start");
        out.start_time_ = time;
        out.start_index_ = idx;
        return out;
    }

private:
    Clock clock_;
    double start_time_;
    std::vector<double> start_state_;
    std::size_t n_paths_;
    std::size_t dim_;
    std::uint64_t seed_;
    std::size_t start_index_;
    std::vector<double> data_;
};

/// Simulates the model from (s, x). Euler-Maruyama stepping on the clock
/// grid; jump kinds superimpose Poisson(rate * dt) Gaussian jumps; the
/// stable kind draws CMS increments scaled by dt^(1/alpha), or, when the
/// model is truncated, a matched small-jump Brownian part plus
/// inverse-CDF compound Poisson jumps from the quadrature window.
inline PathEnsemble sample_paths(const ForwardModel& model, double start_time,
                                 std::span<const double> start_state, std::size_t n_paths,
                                 std::uint64_t seed) {
    if (start_state.size() != model.dim())
        throw alignment_error("sample_paths: start state dimension mismatch");
    PathEnsemble ens(model.clock(), start_time,
                     std::vector<double>(start_state.begin(), start_state.end()), n_paths, seed);
    const Clock& clock = ens.clock();
    const std::size_t d = model.dim();
    const std::size_t s_idx = ens.start_index();
    const std::size_t nodes = clock.nodes();

    if (model.kind() == ForwardModel::Kind::jump_diffusion)
        model.require_invertible_sigma(start_time, start_state);

    std::vector<double> mu(d), sg(d * d), z(d);
    for (std::size_t p = 0; p < n_paths; ++p) {
        PathRng rng(seed, p);
        for (std::size_t k = 0; k <= s_idx; ++k) {
            auto st = ens.state(p, k);
            for (std::size_t i = 0; i < d; ++i) st[i] = start_state[i];
        }
        for (std::size_t k = s_idx; k + 1 < nodes; ++k) {
            const double t = clock.time(k);
            const double dt = clock.time(k + 1) - clock.time(k);
            auto cur = ens.state(p, k);
            auto nxt = ens.state(p, k + 1);
            switch (model.kind()) {
                case ForwardModel::Kind::brownian:
                case ForwardModel::Kind::jump_diffusion: {
                    model.diffusion().drift(t, cur, mu);
                    model.diffusion().diffusion(t, cur, sg);
                    for (std::size_t i = 0; i < d; ++i) z[i] = rng.normal();
                    const double sqdt = std::sqrt(dt);
                    for (std::size_t i = 0; i < d; ++i) {
                        double diff = 0.0;
                        for (std::size_t j = 0; j < d; ++j) diff += sg[i * d + j] * z[j];
                        nxt[i] = cur[i] + mu[i] * dt + sqdt * diff;
                    }
                    if (model.kind() == ForwardModel::Kind::jump_diffusion) {
                        const auto& jc = model.jumps();
                        const double rate = jc.rate(t, cur);
                        if (rate < 0.0) throw domain_error("sample_paths: negative jump rate");
                        const unsigned n_jumps = rng.poisson(rate * dt);
                        for (unsigned j = 0; j < n_jumps; ++j)
                            for (std::size_t i = 0; i < d; ++i)
                                nxt[i] += jc.jump_mean[i] + jc.jump_std[i] * rng.normal();
                    }
                    break;
                }
                case ForwardModel::Kind::alpha_stable: {
                    const auto& sc = model.stable();
                    if (!sc.truncated) {
                        nxt[0] = cur[0] +
                                 sc.scale * std::pow(dt, 1.0 / sc.alpha) * rng.stable_symmetric(sc.alpha);
                    } else {
                        const double sig = std::sqrt(sc.small_jump_variance() * dt);
                        double move = sig * rng.normal();
                        const unsigned n_jumps = rng.poisson(sc.window_rate() * dt);
                        const double lo = std::pow(sc.inner_cut, -sc.alpha);
                        const double hi = std::pow(sc.outer_cut, -sc.alpha);
                        for (unsigned j = 0; j < n_jumps; ++j) {
                            const double u = rng.uniform();
                            const double mag = std::pow(lo - u * (lo - hi), -1.0 / sc.alpha);
                            move += (rng.uniform() < 0.5 ? mag : -mag);
                        }
                        nxt[0] = cur[0] + move;
                    }
                    break;
                }
            }
        }
    }
    return ens;
}

/// Per-path per-cell increments of M[phi]: the increment of phi along the
/// path compensated by a(phi) against the clock, zero before the start time.
inline Array2D martingale_path(const ForwardModel& model, const TestFunction& phi,
                               const PathEnsemble& ens) {
    const Clock& clock = ens.clock();
    const std::size_t cells = clock.cells();
    const std::size_t s_idx = ens.start_index();
    Array2D dm(ens.n_paths(), cells, 0.0);
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        for (std::size_t c = s_idx; c < cells; ++c) {
            const double t_left = clock.time(c);
            const auto left = ens.state(p, c);
            const double gen = apply_generator(model, phi, t_left, left);
            dm(p, c) = phi.value(clock.time(c + 1), ens.state(p, c + 1)) -
                       phi.value(t_left, left) - gen * clock.dv(c);
        }
    }
    return dm;
}

}  // namespace bsdelab
