#include "auvtrack/dynamics.hpp"

#include "auvtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace auvtrack {

Eigen::Vector2d AuvState::world_velocity() const {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {c * u - s * v_sway, s * u + c * v_sway};
}

void AuvParams::validate() const {
    const bool ok = m11 > 0 && m22 > 0 && m33 > 0 && dt > 0 && v_max > 0 && w_max > 0 &&
                    std::all_of(d_lin.begin(), d_lin.end(), [](double d) { return d > 0; }) &&
                    std::all_of(d_quad.begin(), d_quad.end(), [](double d) { return d > 0; });
    if (!ok) {
        throw ConfigError("auv_params: inertia, damping, dt and speed caps must be positive");
    }
}

double wrap_angle(double a) {
    constexpr double kPi = std::numbers::pi;
    if (a > -kPi && a <= kPi) {
        return a;
    }
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0) {
        a += 2.0 * kPi;
    }
    a -= kPi;
    return a == -kPi ? kPi : a;
}

Eigen::Matrix3d rotation_matrix(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::Matrix3d j;
    j << c, -s, 0, s, c, 0, 0, 0, 1;
    return j;
}

Eigen::Matrix3d coriolis_matrix(const Eigen::Vector3d& nu, const AuvParams& p) {
    Eigen::Matrix3d c;
    c << 0, 0, -p.m22 * nu(1),  //
        0, 0, p.m11 * nu(0),    //
        p.m22 * nu(1), -p.m11 * nu(0), 0;
    return c;
}

Eigen::Vector3d damping_force(const Eigen::Vector3d& nu, const AuvParams& p) {
    Eigen::Vector3d d;
    for (int i = 0; i < 3; ++i) {
        d(i) = p.d_lin[i] * nu(i) + p.d_quad[i] * std::abs(nu(i)) * nu(i);
    }
    return d;
}

ControlInput clamp_input(const ControlInput& tau, const AuvParams& p) {
    return {std::clamp(tau.tau_u, -p.tau_max[0], p.tau_max[0]), std::clamp(tau.tau_v, -p.tau_max[1], p.tau_max[1]),
            std::clamp(tau.tau_w, -p.tau_max[2], p.tau_max[2])};
}

AuvState step(const AuvState& s, const ControlInput& tau, const AuvParams& p) {
    const Eigen::Vector3d eta(s.x, s.y, s.theta);
    const Eigen::Vector3d nu(s.u, s.v_sway, s.w);
    const Eigen::Vector3d t(tau.tau_u, tau.tau_v, tau.tau_w);

    const Eigen::Vector3d eta_next = eta + p.dt * rotation_matrix(s.theta) * nu;
    const Eigen::Vector3d force = t - coriolis_matrix(nu, p) * nu - damping_force(nu, p);
    const Eigen::Vector3d minv(1.0 / p.m11, 1.0 / p.m22, 1.0 / p.m33);
    const Eigen::Vector3d nu_next = nu + p.dt * minv.cwiseProduct(force);

    AuvState out;
    out.x = eta_next(0);
    out.y = eta_next(1);
    out.theta = wrap_angle(eta_next(2));
    out.u = std::clamp(nu_next(0), -p.v_max, p.v_max);
    out.v_sway = nu_next(1);
    out.w = std::clamp(nu_next(2), -p.w_max, p.w_max);
    if (!std::isfinite(out.x) || !std::isfinite(out.y) || !std::isfinite(out.theta) || !std::isfinite(out.u) ||
        !std::isfinite(out.v_sway) || !std::isfinite(out.w)) {
        throw NumericFault("vehicle state became non-finite");
    }
    return out;
}

ControlInput velocity_controller(const AuvState& s, double v_des, double w_des, const AuvParams& p) {
    v_des = std::clamp(v_des, 0.0, p.v_max);
    w_des = std::clamp(w_des, -p.w_max, p.w_max);
    const double drag_ff = p.d_lin[0] * v_des + p.d_quad[0] * v_des * v_des;
    ControlInput tau{p.k_v * (v_des - s.u) + drag_ff, 0.0, p.k_w * (w_des - s.w)};
    return clamp_input(tau, p);
}

double kinetic_energy(const AuvState& s, const AuvParams& p) {
    return 0.5 * (p.m11 * s.u * s.u + p.m22 * s.v_sway * s.v_sway + p.m33 * s.w * s.w);
}

}  // namespace auvtrack
