#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/env.hpp"
#include "auvtrack/errors.hpp"

#include <cmath>

using namespace auvtrack;

namespace {

WorldSnapshot two_agent_world(double spacing, double target_dist) {
    WorldSnapshot w;
    AuvState a, b;
    a.y = spacing / 2;
    b.y = -spacing / 2;
    w.agents = {a, b};
    const double x = std::sqrt(target_dist * target_dist - spacing * spacing / 4);
    w.target_pos = {x, 0.0};
    return w;
}

WorldSnapshot rotate(const WorldSnapshot& w, double phi) {
    const Eigen::Rotation2Dd r(phi);
    WorldSnapshot o = w;
    for (auto& a : o.agents) {
        const Eigen::Vector2d p = r * a.position();
        a.x = p.x();
        a.y = p.y();
        a.theta = wrap_angle(a.theta + phi);
    }
    o.target_pos = r * w.target_pos;
    o.target_vel = r * w.target_vel;
    return o;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("worked reward example") {
    HydroParams hp;
    const RewardWeights rw = RewardWeights::for_setting(RewardSetting::kCooperative);
    const WorldSnapshot w = two_agent_world(12.0, 16.0);
    const auto r = compute_rewards(w, {}, rw, hp);
    REQUIRE(r.size() == 2);
    CHECK(std::abs(r[0].lambda - 102.80) < 0.01);
    CHECK(r[0].r_ti == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(r[0].r_o == 0.0);
    // Hand evaluation with the exact lambda of this layout.
    const double hand = -0.25 * 4.0 + (-0.2 / 2) * (100.0 - r[0].lambda);
    CHECK(std::abs(r[0].total - hand) < 1e-9);
    CHECK(std::abs(r[0].total - (-0.72)) < 1e-3);
    CHECK(r[0].total == r[1].total);
}

TEST_CASE("tracking and collision branches") {
    HydroParams hp;
    const RewardWeights rw;
    const auto close = compute_rewards(two_agent_world(12.0, 10.0), {}, rw, hp);
    CHECK(close[0].r_ti == 0.0);
    const auto tight = compute_rewards(two_agent_world(5.0, 12.0), {}, rw, hp);
    CHECK(tight[0].r_o == doctest::Approx(3.0));
    CHECK(tight[1].r_o == doctest::Approx(3.0));
    // Obstacle band uses the surface distance.
    WorldSnapshot w = two_agent_world(12.0, 12.0);
    const Obstacle ob{{0.0, 6.0 + 2.0 + 7.0}, 2.0};
    const auto r = compute_rewards(w, {ob}, rw, hp);
    CHECK(r[0].r_o == doctest::Approx(1.0));
    CHECK(r[1].r_o == 0.0);
}

TEST_CASE("reward breakdown, settings and symmetry") {
    HydroParams hp;
    gen::Gen g(31);
    for (int k = 0; k < 200; ++k) {
        const int n = g.integer(2, 4);
        WorldSnapshot w;
        for (int i = 0; i < n; ++i) {
            AuvState s;
            const Eigen::Vector2d p = g.point(20);
            s.x = p.x();
            s.y = p.y();
            w.agents.push_back(s);
        }
        w.target_pos = g.point(20);
        std::vector<Obstacle> obs{{g.point(30), g.uniform(1, 4)}};
        for (auto setting : {RewardSetting::kCooperative, RewardSetting::kMixed, RewardSetting::kSplit}) {
            const RewardWeights rw = RewardWeights::for_setting(setting);
            CHECK(rw.a + rw.b == doctest::Approx(1.0));
            const auto r = compute_rewards(w, obs, rw, hp);
            for (const auto& ri : r) {
                const double sum = rw.w1 * (rw.a * ri.r_tc + rw.b * ri.r_ti) + rw.w2 * ri.r_o + rw.w3_total / n * ri.r_l;
                CHECK(ri.total == doctest::Approx(sum).epsilon(1e-14));
            }
            // Swap agents 0 and 1: rewards permute the same way.
            WorldSnapshot sw = w;
            std::swap(sw.agents[0], sw.agents[1]);
            const auto rs = compute_rewards(sw, obs, rw, hp);
            CHECK(rs[0].total == doctest::Approx(r[1].total).epsilon(1e-12));
            CHECK(rs[1].total == doctest::Approx(r[0].total).epsilon(1e-12));
            if (setting == RewardSetting::kCooperative) {
                // Same tracking term for everyone.
                for (const auto& ri : r) CHECK(ri.r_tc == r[0].r_tc);
            }
        }
    }
}

TEST_CASE("reset: determinism, detection range and observation size") {
    const ScenarioSpec spec = make_scenario("1", 2, 0);
    MultiAuvEnv a(spec), b(spec);
    const auto oa = a.reset(0);
    const auto ob = b.reset(0);
    REQUIRE(oa.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(oa[i] == ob[i]);
        CHECK(oa[i].size() == 15);
        CHECK((a.world().agents[i].position() - a.world().target_pos).norm() <= a.detection_range());
        CHECK(a.world().agents[i].theta == 0.0);
    }
    CHECK(std::abs(a.detection_range() - 25.03) < 0.05);
    for (const std::string id : scenario_ids()) {
        for (int n = 2; n <= 4; ++n) {
            MultiAuvEnv e(make_scenario(id, n, 3));
            const auto o = e.reset(7);
            for (const auto& v : o) CHECK(v.size() == 4 * n + 2 * e.spec().n_obs_slots + 1);
        }
    }
}

TEST_CASE("observation: dead-ahead target, empty obstacle block, frame invariance") {
    HydroParams hp;
    WorldSnapshot w;
    AuvState s;
    w.agents = {s};
    w.target_pos = {10.0, 0.0};
    const Eigen::VectorXd o = observe(w, {}, 0, 3, hp);
    CHECK(o(0) == doctest::Approx(10.0));
    CHECK(o(1) == doctest::Approx(0.0));
    CHECK(o.segment(4, 6).cwiseAbs().maxCoeff() == 0.0);
    CHECK(o(o.size() - 1) == 0.0);

    gen::Gen g(32);
    AuvParams p;
    for (int k = 0; k < 100; ++k) {
        WorldSnapshot x;
        for (int i = 0; i < 3; ++i) x.agents.push_back(g.state(p));
        for (auto& a : x.agents) {
            a.x *= 0.3;
            a.y *= 0.3;
        }
        x.target_pos = g.point(15);
        x.target_vel = g.point(1.5);
        std::vector<Obstacle> obs{{g.point(20), 2.0}, {g.point(20), 3.0}};
        const double phi = g.uniform(-3, 3);
        const WorldSnapshot y = rotate(x, phi);
        std::vector<Obstacle> robs = obs;
        for (auto& ob : robs) ob.center = Eigen::Rotation2Dd(phi) * ob.center;
        for (int i = 0; i < 3; ++i) {
            const Eigen::VectorXd a = observe(x, obs, i, 3, hp);
            const Eigen::VectorXd b = observe(y, robs, i, 3, hp);
            CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("absorbing semantics and scripted collision") {
    ScenarioSpec spec = make_scenario("1", 2, 0);
    MultiAuvEnv env(spec);
    env.reset(1);
    REQUIRE(!env.obstacles().empty());
    const Obstacle ob = env.obstacles().front();
    auto agents = env.world().agents;
    agents[0].x = ob.center.x() - ob.radius - 0.01;
    agents[0].y = ob.center.y();
    agents[0].theta = 0.0;
    agents[0].u = 1.0;
    env.set_agents(agents);
    const StepResult r = env.step({{2.0, 0.0}, {1.2, 0.0}});
    CHECK(r.done);
    CHECK(r.absorbing);
    CHECK(r.reason == Termination::kObstacleCollision);
    const Eigen::VectorXd abs_obs = absorbing_observation(2, spec.n_obs_slots);
    for (const auto& tr : r.transitions) {
        CHECK(tr.next_obs == abs_obs);
        CHECK(!tr.reward.has_value());
    }
    const StepResult again = env.step({{0.3, 0.5}, {2.0, -1.0}});
    CHECK(again.absorbing);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(again.transitions[i].obs == abs_obs);
        CHECK(again.transitions[i].next_obs == abs_obs);
        CHECK(again.rewards[i].total == 0.0);
    }
}

TEST_CASE("agent collision and target lost") {
    ScenarioSpec spec = make_scenario("1", 2, 0);
    spec.obstacles.clear();
    MultiAuvEnv env(spec);
    env.reset(2);
    auto agents = env.world().agents;
    agents[1] = agents[0];
    agents[1].y += 0.5;
    env.set_agents(agents);
    CHECK(env.step({{0.0, 0.0}, {0.0, 0.0}}).reason == Termination::kAgentCollision);

    env.reset(2);
    StepResult r;
    int steps = 0;
    while (!env.done()) {
        r = env.step({{0.0, 0.0}, {0.0, 0.0}});
        ++steps;
    }
    CHECK(r.reason == Termination::kTargetLost);
    CHECK(r.absorbing);
}

TEST_CASE("time limit is not absorbing") {
    ScenarioSpec spec = make_scenario("1", 2, 0);
    spec.duration_steps = 5;
    MultiAuvEnv env(spec);
    env.reset(3);
    StepResult r;
    while (!env.done()) r = env.step({{1.2, 0.0}, {1.2, 0.0}});
    CHECK(r.reason == Termination::kTimeLimit);
    CHECK(r.done);
    CHECK(!r.absorbing);
    CHECK(env.t() == 5);
}

TEST_CASE("scenarios: ids, determinism and mirroring") {
    CHECK_THROWS_AS(make_scenario("nope", 2, 0), ConfigError);
    const ScenarioSpec s1 = make_scenario("1", 2, 0);
    CHECK(s1.obstacles.size() == 1);
    CHECK(s1.target.kind == PathKind::kLine);
    CHECK(s1.target.speed == doctest::Approx(1.2));

    MultiAuvEnv g1(make_scenario("G2", 4, 5)), g2(make_scenario("G2", 4, 5)), g3(make_scenario("G2", 4, 6));
    g1.reset(0);
    g2.reset(0);
    g3.reset(0);
    CHECK(g1.obstacles().size() == g2.obstacles().size());
    bool same = true, differs = false;
    for (std::size_t i = 0; i < g1.obstacles().size(); ++i) {
        same = same && g1.obstacles()[i].center == g2.obstacles()[i].center;
        if (i < g3.obstacles().size()) differs = differs || g1.obstacles()[i].center != g3.obstacles()[i].center;
    }
    CHECK(same);
    CHECK(differs);
    CHECK(g1.target_speed() >= 0.8);
    CHECK(g1.target_speed() <= 1.5);

    // CW and CCW tracks mirror across the start heading.
    ScenarioSpec cw = make_scenario("2-cw", 2, 0), ccw = make_scenario("2-ccw", 2, 0);
    cw.randomization = ccw.randomization = Randomization{};
    MultiAuvEnv a(cw), b(ccw);
    a.reset(0);
    b.reset(0);
    const Eigen::Vector2d o = a.target_track()[0];
    const double h = cw.target.heading;
    const Eigen::Vector2d dir(std::cos(h), std::sin(h));
    const Eigen::Vector2d nrm(-dir.y(), dir.x());
    for (std::size_t t = 0; t < a.target_track().size(); t += 25) {
        const Eigen::Vector2d pa = a.target_track()[t] - o;
        const Eigen::Vector2d pb = b.target_track()[t] - b.target_track()[0];
        CHECK(std::abs(pa.dot(dir) - pb.dot(dir)) < 1e-6);
        CHECK(std::abs(pa.dot(nrm) + pb.dot(nrm)) < 1e-6);
    }
}

}
