#include "issm/hypgeo.hpp"

#include <cmath>
#include <string>

#include "issm/errors.hpp"

namespace issm {

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
    if (!std::isfinite(c) || c <= 0.0) {
        throw InvalidInputError("curvature must be positive and finite, got " + std::to_string(c));
    }
}

bool validate_in_ball(const Vector& v, Curvature c) {
    if (!v.allFinite()) throw InvalidInputError("ball membership: non-finite coordinates");
    return c.sqrt_value() * v.norm() < 1.0 - kBallEpsilon;
}

BallPoint::BallPoint(Vector coords, Curvature c) : coords_(std::move(coords)), c_(c) {
    if (coords_.size() < 1) throw ShapeError("ball point needs at least one coordinate");
    if (!validate_in_ball(coords_, c_)) {
        throw DomainError("point lies on or outside the Poincare ball (sqrt(c)*|x| = " +
                          std::to_string(c_.sqrt_value() * coords_.norm()) + ")");
    }
}

double metric_factor(const BallPoint& x) {
    // kappa = -c
    const double denom = 1.0 - x.curvature().value() * x.coords().squaredNorm();
    const double f = 2.0 / denom;
    return f * f;
}

BallPoint exp_map_origin(const Vector& v, Curvature c) {
    if (!v.allFinite()) throw InvalidInputError("exp map: non-finite input");
    if (v.size() < 1) throw ShapeError("exp map: empty vector");
    const double norm = v.norm();
    if (norm < kZeroNorm) return BallPoint(Vector::Zero(v.size()), c);

    const double scaled = c.sqrt_value() * norm;
    // Keep the image strictly inside the validated region even when tanh rounds to 1.
    const double radius = std::min(std::tanh(scaled), 1.0 - 2.0 * kBallEpsilon);
    return BallPoint(v * (radius / scaled), c);
}

double exp_map_origin(double x, Curvature c) {
    return exp_map_origin(Vector::Constant(1, x), c).coords()[0];
}

Vector log_map_origin(const BallPoint& y) {
    const double norm = y.coords().norm();
    if (norm < kZeroNorm) return Vector::Zero(y.dim());
    const double scaled = y.curvature().sqrt_value() * norm;
    return y.coords() * (std::atanh(scaled) / scaled);
}

}  // namespace issm
