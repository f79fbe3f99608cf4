#pragma once

// Poincare-ball geometry at the origin. The ball has curvature -c and radius 1/sqrt(c).

#include "issm/linalg.hpp"

namespace issm {

/// Interior margin: points with sqrt(c)*|v| >= 1 - kBallEpsilon count as outside.
inline constexpr double kBallEpsilon = 1e-9;

/// Below this norm the exp/log maps take their removable-singularity branch.
inline constexpr double kZeroNorm = 1e-12;

/// Curvature magnitude c > 0 (the ball's curvature is -c).
class Curvature {
public:
    explicit Curvature(double c);
    double value() const noexcept { return c_; }
    double sqrt_value() const noexcept { return sqrt_c_; }

    friend bool operator==(const Curvature&, const Curvature&) = default;

private:
    double c_;
    double sqrt_c_;
};

/// A point strictly inside the ball. Construction throws DomainError otherwise.
class BallPoint {
public:
    BallPoint(Vector coords, Curvature c);

    const Vector& coords() const noexcept { return coords_; }
    Curvature curvature() const noexcept { return c_; }
    Eigen::Index dim() const noexcept { return coords_.size(); }

private:
    Vector coords_;
    Curvature c_;
};

/// True iff sqrt(c)*|v| < 1 - kBallEpsilon. Throws InvalidInputError on non-finite input.
bool validate_in_ball(const Vector& v, Curvature c);

/// Conformal factor (2 / (1 - c|x|^2))^2 of the ball metric at x.
double metric_factor(const BallPoint& x);

/// exp_0^c(v) = tanh(sqrt(c)|v|) v / (sqrt(c)|v|). The image is pulled inside the
/// kBallEpsilon margin when tanh saturates in double precision.
BallPoint exp_map_origin(const Vector& v, Curvature c);

/// Scalar convenience: treats x as a one-dimensional tangent vector.
double exp_map_origin(double x, Curvature c);

/// Inverse of exp_map_origin: artanh(sqrt(c)|y|) y / (sqrt(c)|y|).
Vector log_map_origin(const BallPoint& y);

}  // namespace issm
