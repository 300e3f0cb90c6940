#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/episode_io.hpp"
#include "auvtrack/errors.hpp"
#include "auvtrack/expert.hpp"
#include "auvtrack/swarm.hpp"

#include <cmath>

using namespace auvtrack;

namespace {

const Eigen::Vector2d kZero = Eigen::Vector2d::Zero();

Eigen::Vector2d slot_of(const ApfParams& p, int i, const Eigen::Vector2d& target, double heading) {
    const double a = heading + p.formation_angles[static_cast<std::size_t>(i)];
    return target + p.standoff * Eigen::Vector2d(std::cos(a), std::sin(a));
}

}  // namespace

TEST_SUITE("expert") {

TEST_CASE("default formation matches the connectivity target") {
    for (int n = 2; n <= 4; ++n) {
        const ScenarioSpec spec = make_scenario("1", n, 0);
        const ApfParams p = default_apf(spec);
        REQUIRE(p.formation_angles.size() == static_cast<std::size_t>(n));
        CHECK(p.standoff == 12.0);
        std::vector<Eigen::Vector2d> pos;
        for (int i = 0; i < n; ++i) pos.push_back(slot_of(p, i, Eigen::Vector2d::Zero(), 0.0));
        const double lambda = swarm_consistency(pos, spec.hydro);
        CHECK(std::abs(lambda - 50.0 * n) < 0.5);
        CHECK_NOTHROW(p.validate(spec.reward.d_safe));
    }
}

TEST_CASE("field vanishes at the slot of a stationary target") {
    const ScenarioSpec spec = make_scenario("1", 3, 0);
    const ApfParams p = default_apf(spec);
    gen::Gen g(41);
    for (int k = 0; k < 50; ++k) {
        const Eigen::Vector2d tgt = g.point(100);
        const double h = g.uniform(-3, 3);
        const Eigen::Vector2d s0 = slot_of(p, 0, tgt, h);
        const Eigen::Vector2d v = apf_velocity(s0, 0, tgt, Eigen::Vector2d::Zero(), h, {}, {}, p);
        CHECK(v.norm() < 1e-9);
        // A moving target adds its velocity.
        const Eigen::Vector2d vt = g.point(1.5);
        CHECK((apf_velocity(s0, 0, tgt, vt, h, {}, {}, p) - vt).norm() < 1e-9);
    }
}

TEST_CASE("obstacle pushes away, peers beyond cutoff are ignored") {
    const ScenarioSpec spec = make_scenario("1", 2, 0);
    const ApfParams p = default_apf(spec);
    const Eigen::Vector2d tgt(0, 0);
    const Eigen::Vector2d agent = slot_of(p, 0, tgt, 0.0) + Eigen::Vector2d(-10, 0);
    const Eigen::Vector2d free = apf_velocity(agent, 0, tgt, kZero, 0.0, {}, {}, p);
    const Obstacle ob{agent + Eigen::Vector2d(4.0, 1.0), 2.0};
    const Eigen::Vector2d pushed = apf_velocity(agent, 0, tgt, kZero, 0.0, {}, {ob}, p);
    const Eigen::Vector2d away = (agent - ob.center).normalized();
    CHECK((pushed - free).dot(away) > 0.0);
    CHECK(std::abs((pushed - free).normalized().dot(away) - 1.0) < 1e-12);

    const Eigen::Vector2d far_peer = agent + Eigen::Vector2d(0, p.rho0_peer + 0.1);
    CHECK((apf_velocity(agent, 0, tgt, kZero, 0.0, {far_peer}, {}, p) - free).norm() == 0.0);
    const Eigen::Vector2d near_peer = agent + Eigen::Vector2d(0, 1.0);
    CHECK((apf_velocity(agent, 0, tgt, kZero, 0.0, {near_peer}, {}, p) - free).y() < 0.0);
}

TEST_CASE("apf step saturates and rejects bad inputs") {
    const ScenarioSpec spec = make_scenario("1", 2, 0);
    const ApfParams p = default_apf(spec);
    gen::Gen g(42);
    for (int k = 0; k < 100; ++k) {
        const Eigen::Vector2d vt = g.point(1.5);
        const Eigen::Vector2d agent = g.point(60);
        const Waypoint wp = apf_step(agent, 1, Eigen::Vector2d::Zero(), vt, 0.3, {}, {}, p, 0.08);
        CHECK(wp.velocity.norm() <= p.speed_factor * std::max(vt.norm(), p.min_ref_speed) + 1e-12);
        CHECK((wp.position - agent - 0.08 * wp.velocity).norm() < 1e-12);
    }
    const Obstacle ob{{5.0, 5.0}, 2.0};
    CHECK_THROWS_AS(apf_step({5.5, 5.0}, 0, kZero, kZero, 0.0, {}, {ob}, p, 0.08), DomainError);
    CHECK_THROWS_AS(apf_step({0.0, 0.0}, 5, kZero, kZero, 0.0, {}, {}, p, 0.08), DomainError);
    CHECK_THROWS_AS(apf_step({std::nan(""), 0.0}, 0, kZero, kZero, 0.0, {}, {}, p, 0.08), DomainError);
}

TEST_CASE("tracker observation and command mapping") {
    AuvState s;
    s.theta = 0.7;
    s.u = 1.1;
    const Eigen::Vector2d ahead(std::cos(0.7), std::sin(0.7));
    Waypoint wp{s.position() + 5.0 * ahead, 1.2 * ahead};
    const Eigen::VectorXd o = tracker_observation(s, wp);
    REQUIRE(o.size() == kTrackerObsDim);
    CHECK(o(0) == doctest::Approx(5.0));
    CHECK(std::abs(o(1)) < 1e-12);

    AuvParams p;
    CHECK(tracker_command(Eigen::Vector2d(-1, -1), p) == Action(0.0, -p.w_max));
    CHECK(tracker_command(Eigen::Vector2d(1, 1), p) == Action(p.v_max, p.w_max));
    CHECK(tracker_command(Eigen::Vector2d(0, 0), p)(0) == doctest::Approx(0.25 * p.v_max));
    CHECK(tracker_command(Eigen::Vector2d(7, -7), p) == Action(p.v_max, -p.w_max));
}

TEST_CASE("expert episodes are deterministic and well formed") {
    ScenarioSpec spec = make_scenario("1", 2, 0);
    spec.duration_steps = 40;
    WaypointTracker trk(spec.auv, tracker_sac_config(TrackerTrainConfig{}, 3));
    const ApfParams apf = default_apf(spec);
    ExpertEpisodeStats st;
    const EpisodeRecord a = run_expert_episode(spec, trk, apf, 11, &st);
    const EpisodeRecord b = run_expert_episode(spec, trk, apf, 11);
    CHECK(a.source == "expert");
    CHECK(a.length() > 0);
    CHECK(a.length() <= 40);
    CHECK(nlohmann::json(a).dump() == nlohmann::json(b).dump());
    CHECK_NOTHROW(validate_layout(a));
    CHECK(st.max_tracking_error >= st.mean_tracking_error);
}

}
