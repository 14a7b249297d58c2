#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bsdelab/errors.hpp"
#include "bsdelab/rng.hpp"

namespace bsdelab {

/// BSDE driver f(t, x, y, z) with terminal function g and declared Lipschitz
/// constants in (y, z).
struct Driver {
    std::function<double(double, std::span<const double>, double, double)> f;
    std::function<double(std::span<const double>)> terminal;
    double lip_y = 0.0;
    double lip_z = 0.0;
};

/// Spot-check of the Lipschitz bound on randomized points: returns the worst
/// excess of |f(t,x,y,z) - f(t,x,y',z')| over K_Y |y-y'| + K_Z |z-z'|,
/// relative to the bound scale (<= 0 when the declared constants hold).
inline double lipschitz_violation(const Driver& driver, double t_hi,
                                  std::span<const double> x_lo, std::span<const double> x_hi,
                                  double yz_range, int trials = 256, std::uint64_t seed = 0x11CE) {
    PathRng rng(seed, 0);
    const std::size_t d = x_lo.size();
    std::vector<double> x(d);
    double worst = -1.0;
    for (int i = 0; i < trials; ++i) {
        const double t = t_hi * rng.uniform();
        for (std::size_t j = 0; j < d; ++j)
            x[j] = x_lo[j] + (x_hi[j] - x_lo[j]) * rng.uniform();
        const double y = yz_range * (2.0 * rng.uniform() - 1.0);
        const double yp = yz_range * (2.0 * rng.uniform() - 1.0);
        const double z = yz_range * rng.uniform();
        const double zp = yz_range * rng.uniform();
        const double gap = std::fabs(driver.f(t, x, y, z) - driver.f(t, x, yp, zp));
        const double bound = driver.lip_y * std::fabs(y - yp) + driver.lip_z * std::fabs(z - zp);
        const double scale = std::max(1.0, bound);
        worst = std::max(worst, (gap - bound * (1.0 + 1e-9)) / scale);
    }
    return worst;
}

}  // namespace bsdelab
