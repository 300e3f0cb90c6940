#pragma once

#include <Eigen/Dense>

#include <array>

namespace auvtrack {

/// Pose in the world frame and velocity in the body frame.
struct AuvState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;  // (-pi, pi]
    double u = 0.0;      // surge
    double v_sway = 0.0;
    double w = 0.0;  // yaw rate

    [[nodiscard]] Eigen::Vector2d position() const { return {x, y}; }
    /// World-frame velocity of the vehicle.
    [[nodiscard]] Eigen::Vector2d world_velocity() const;
    bool operator==(const AuvState&) const = default;
};

struct AuvParams {
    double m11 = 30.0;
    double m22 = 35.0;
    double m33 = 3.5;
    std::array<double, 3> d_lin{5.0, 20.0, 4.0};
    std::array<double, 3> d_quad{10.0, 40.0, 6.0};
    double v_max = 2.4;
    double w_max = 1.0;
    double k_v = 60.0;
    double k_w = 35.0;
    double dt = 0.08;
    std::array<double, 3> tau_max{60.0, 0.0, 12.0};

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

struct ControlInput {
    double tau_u = 0.0;
    double tau_v = 0.0;
    double tau_w = 0.0;
};

double wrap_angle(double a);

/// Planar J(eta): body velocity -> world rates.
Eigen::Matrix3d rotation_matrix(double theta);

/// Rigid-body Coriolis/centripetal matrix for a diagonal inertia matrix.
Eigen::Matrix3d coriolis_matrix(const Eigen::Vector3d& nu, const AuvParams& p);

/// D(nu) nu with linear plus quadratic damping.
Eigen::Vector3d damping_force(const Eigen::Vector3d& nu, const AuvParams& p);

ControlInput clamp_input(const ControlInput& tau, const AuvParams& p);

/// One explicit Euler step of eta' = J v, M v' = tau - C(v) v - D(v) v.
/// Throws NumericFault on a non-finite result.
AuvState step(const AuvState& s, const ControlInput& tau, const AuvParams& p);

/// Surge P-law with drag feedforward and a yaw-rate P-law; sway is unactuated.
ControlInput velocity_controller(const AuvState& s, double v_des, double w_des, const AuvParams& p);

double kinetic_energy(const AuvState& s, const AuvParams& p);

}  // namespace auvtrack
