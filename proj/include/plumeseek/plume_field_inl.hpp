#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace plumeseek {

inline double plume_concentration_unchecked(const SourceParams& p, double x, double y) {
    const double dx = x - p.x_s;
    const double dy = y - p.y_s;
    const double r = std::max(std::hypot(dx, dy), kRadiusFloor);
    const double exponent = -r / p.lambda - (dx * p.u_x + dy * p.u_y) / (2.0 * p.psi);
    return p.q_s / (4.0 * std::numbers::pi * p.psi * r) * std::exp(exponent);
}

}  // namespace plumeseek
