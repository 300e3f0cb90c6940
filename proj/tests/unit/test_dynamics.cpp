#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/dynamics.hpp"
#include "auvtrack/errors.hpp"

#include <cmath>
#include <numbers>

using namespace auvtrack;

TEST_SUITE("dynamics") {

TEST_CASE("rotation matrix fixed values and orthogonality") {
    CHECK(rotation_matrix(0.0).isApprox(Eigen::Matrix3d::Identity(), 1e-15));
    Eigen::Matrix3d quarter;
    quarter << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK((rotation_matrix(std::numbers::pi / 2) - quarter).cwiseAbs().maxCoeff() < 1e-15);
    gen::Gen g(1);
    for (int k = 0; k < 200; ++k) {
        const Eigen::Matrix3d j = rotation_matrix(g.uniform(-10, 10));
        CHECK((j.transpose() * j - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(j.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("wrap_angle stays in (-pi, pi]") {
    gen::Gen g(2);
    for (int k = 0; k < 1000; ++k) {
        const double a = g.uniform(-100, 100);
        const double w = wrap_angle(a);
        CHECK(w > -std::numbers::pi);
        CHECK(w <= std::numbers::pi);
        CHECK(std::abs(std::sin(w) - std::sin(a)) < 1e-9);
        CHECK(std::abs(std::cos(w) - std::cos(a)) < 1e-9);
    }
    CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("zero input at rest is a fixed point") {
    AuvParams p;
    AuvState s;
    s.x = 3;
    s.y = -2;
    s.theta = 0.4;
    CHECK(step(s, {}, p) == s);
}

TEST_CASE("damping slows an unforced vehicle") {
    AuvParams p;
    AuvState s;
    s.u = 1.0;
    const AuvState n = step(s, {}, p);
    CHECK(n.u < s.u);
    CHECK(n.u > 0.0);
    // Oracle: one Euler step of m11 u' = -(d1 u + d2 |u| u).
    CHECK(n.u == doctest::Approx(1.0 - p.dt * (p.d_lin[0] + p.d_quad[0]) / p.m11).epsilon(1e-12));
}

TEST_CASE("drag-balancing thrust moves 0.08 m in one step") {
    AuvParams p;
    AuvState s;
    s.u = 1.0;
    const ControlInput tau{p.d_lin[0] + p.d_quad[0], 0.0, 0.0};
    const AuvState n = step(s, tau, p);
    CHECK(n.x == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(n.u == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kinetic energy is non-increasing without thrust") {
    AuvParams p;
    gen::Gen g(3);
    for (int k = 0; k < 200; ++k) {
        AuvState s = g.state(p);
        for (int t = 0; t < 50; ++t) {
            const AuvState n = step(s, {}, p);
            CHECK(kinetic_energy(n, p) <= kinetic_energy(s, p) + 1e-12);
            s = n;
        }
    }
}

TEST_CASE("trajectories are rotation invariant") {
    AuvParams p;
    gen::Gen g(4);
    for (int k = 0; k < 20; ++k) {
        AuvState a = g.state(p);
        a.x = a.y = 0.0;
        const double phi = g.uniform(-3, 3);
        AuvState b = a;
        b.theta = wrap_angle(a.theta + phi);
        for (int t = 0; t < 100; ++t) {
            const double v = g.uniform(0, p.v_max);
            const double w = g.uniform(-p.w_max, p.w_max);
            a = step(a, velocity_controller(a, v, w, p), p);
            b = step(b, velocity_controller(b, v, w, p), p);
        }
        const Eigen::Vector2d back = Eigen::Rotation2Dd(-phi) * b.position();
        CHECK((back - a.position()).norm() < 1e-9);
        CHECK(std::abs(wrap_angle(b.theta - phi - a.theta)) < 1e-9);
        CHECK(std::abs(a.u - b.u) < 1e-9);
    }
}

TEST_CASE("step is deterministic") {
    AuvParams p;
    gen::Gen g(5);
    const AuvState s = g.state(p);
    const ControlInput tau{10.0, 0.0, -3.0};
    CHECK(step(s, tau, p) == step(s, tau, p));
}

TEST_CASE("controller: equilibrium, convergence and clamping") {
    AuvParams p;
    AuvState s;
    s.u = 1.0;
    // At the commanded speed only the drag feedforward acts, so the speed holds.
    const ControlInput hold = velocity_controller(s, 1.0, 0.0, p);
    CHECK(hold.tau_u == doctest::Approx(p.d_lin[0] + p.d_quad[0]));
    CHECK(step(s, hold, p).u == doctest::Approx(1.0).epsilon(1e-12));

    AuvState r;
    int reached = -1;
    for (int t = 0; t < 200; ++t) {
        r = step(r, velocity_controller(r, 1.2, 0.0, p), p);
        if (reached < 0 && std::abs(r.u - 1.2) < 0.06) reached = t + 1;
    }
    REQUIRE(reached > 0);
    CHECK(reached * p.dt < 3.0);

    AuvState w;
    w.w = -p.w_max;
    const ControlInput c = velocity_controller(w, 0.0, -p.w_max - 1.0, p);
    CHECK(c.tau_w == doctest::Approx(0.0));
    const ControlInput big = velocity_controller(AuvState{}, 100.0, 0.0, p);
    CHECK(big.tau_u <= p.tau_max[0]);
}

TEST_CASE("params validation") {
    AuvParams p;
    p.m11 = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    AuvParams q;
    CHECK_NOTHROW(q.validate());
}

}
