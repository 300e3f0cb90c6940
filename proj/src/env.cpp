#include "auvtrack/env.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace auvtrack {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::kRunning: return "running";
        case Termination::kTimeLimit: return "time_limit";
        case Termination::kObstacleCollision: return "obstacle_collision";
        case Termination::kAgentCollision: return "agent_collision";
        case Termination::kTargetLost: return "target_lost";
    }
    return "running";
}

double surface_distance(const Eigen::Vector2d& p, const Obstacle& o) { return (p - o.center).norm() - o.radius; }

int observation_dim(int n_agents, int n_obs_slots) { return 4 * n_agents + 2 * n_obs_slots + 1; }

Eigen::VectorXd absorbing_observation(int n_agents, int n_obs_slots) {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(observation_dim(n_agents, n_obs_slots));
    o(o.size() - 1) = 1.0;
    return o;
}

std::vector<RewardBreakdown> compute_rewards(const WorldSnapshot& w, const std::vector<Obstacle>& obstacles,
                                             const RewardWeights& rw, const HydroParams& hp) {
    const int n = static_cast<int>(w.agents.size());
    std::vector<RewardBreakdown> out(static_cast<std::size_t>(n));
    std::vector<Eigen::Vector2d> pos;
    for (const auto& a : w.agents) pos.push_back(a.position());

    double lambda = 0.0;
    if (n >= 2) {
        lambda = swarm_consistency(pos, hp);
    }
    const double lambda_max = rw.lambda_max_per_agent * n;
    const double lambda0 = rw.lambda0_per_agent * n;
    const double r_l = n >= 2 ? (lambda >= lambda_max ? lambda0 - lambda_max : lambda0 - lambda) : 0.0;
    const double w3 = rw.w3_total / n;

    double r_tc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = (pos[i] - w.target_pos).norm();
        out[i].r_ti = d > rw.d_min_t ? d - rw.d_min_t : 0.0;
        r_tc = std::max(r_tc, out[i].r_ti);
    }
    for (int i = 0; i < n; ++i) {
        double r_o = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = (pos[i] - pos[j]).norm();
            if (d < rw.d_safe) r_o += rw.d_safe - d;
        }
        for (const auto& o : obstacles) {
            const double d = surface_distance(pos[i], o);
            if (d < rw.d_safe) r_o += rw.d_safe - d;
        }
        auto& r = out[i];
        r.r_tc = r_tc;
        r.r_o = r_o;
        r.r_l = r_l;
        r.lambda = lambda;
        r.total = rw.w1 * (rw.a * r.r_tc + rw.b * r.r_ti) + rw.w2 * r.r_o + w3 * r.r_l;
    }
    return out;
}

Eigen::VectorXd observe(const WorldSnapshot& w, const std::vector<Obstacle>& obstacles, int i, int n_obs_slots,
                        const HydroParams& hp) {
    const int n = static_cast<int>(w.agents.size());
    Eigen::VectorXd o = Eigen::VectorXd::Zero(observation_dim(n, n_obs_slots));
    const AuvState& me = w.agents[static_cast<std::size_t>(i)];
    const Eigen::Rotation2Dd to_body(-me.theta);
    const Eigen::Vector2d p = me.position();
    const Eigen::Vector2d v = me.world_velocity();

    Eigen::Index k = 0;
    auto put_block = [&](const Eigen::Vector2d& pos, const Eigen::Vector2d& vel) {
        const Eigen::Vector2d rp = to_body * (pos - p);
        const Eigen::Vector2d rv = to_body * (vel - v);
        o(k++) = rp.x();
        o(k++) = rp.y();
        o(k++) = rv.x();
        o(k++) = rv.y();
    };
    put_block(w.target_pos, w.target_vel);
    for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        put_block(w.agents[j].position(), w.agents[j].world_velocity());
    }

    struct Seen {
        double dist;
        double em;
        double bearing;
    };
    std::vector<Seen> seen;
    for (const auto& ob : obstacles) {
        const double d = std::max(0.1, surface_distance(p, ob));
        const double em = active_echo_margin(d, hp);
        if (em >= 0.0) {
            const Eigen::Vector2d rc = to_body * (ob.center - p);
            seen.push_back({d, em, std::atan2(rc.y(), rc.x())});
        }
    }
    std::stable_sort(seen.begin(), seen.end(), [](const Seen& a, const Seen& b) { return a.dist < b.dist; });
    for (int s = 0; s < n_obs_slots; ++s) {
        if (s < static_cast<int>(seen.size())) {
            o(k) = seen[s].em * std::cos(seen[s].bearing);
            o(k + 1) = seen[s].em * std::sin(seen[s].bearing);
        }
        k += 2;
    }
    o(k) = 0.0;  // absorbing flag
    return o;
}

// ---------------------------------------------------------------- MultiAuvEnv

MultiAuvEnv::MultiAuvEnv(ScenarioSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    detection_range_ = detection_radius(spec_.hydro);
}

void MultiAuvEnv::build_target_track(std::mt19937_64& rng) {
    const double dt = spec_.auv.dt;
    const int steps = spec_.duration_steps + 2;
    TargetPath path(spec_.target, target_speed_ * dt * steps + 30.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const auto& r = spec_.randomization;
    double lateral = 0.0;
    double goal = 0.0;
    const double max_rate = 0.1 * dt;  // m per step
    target_track_.clear();
    for (int t = 0; t < steps; ++t) {
        const double s = target_speed_ * dt * t;
        if (r.deviation_max > 0.0 && u01(rng) < r.deviation_prob) {
            goal = (2.0 * u01(rng) - 1.0) * r.deviation_max;
        }
        lateral += std::clamp(goal - lateral, -max_rate, max_rate);
        const Eigen::Vector2d tan = path.tangent(s);
        target_track_.push_back(path.point(s) + lateral * Eigen::Vector2d(-tan.y(), tan.x()));
    }
}

std::vector<Eigen::VectorXd> MultiAuvEnv::reset(std::uint64_t seed) {
    // Independent streams: target motion, layout jitter, spawn, disturbances.
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(spec_.seed >> 32)};
    std::mt19937_64 master(seq);
    std::mt19937_64 target_rng(master());
    std::mt19937_64 layout_rng(master());
    std::mt19937_64 spawn_rng(master());
    disturbance_rng_.seed(master());

    const auto& rnd = spec_.randomization;
    target_speed_ = spec_.target.speed;
    if (rnd.speed_max > rnd.speed_min) {
        target_speed_ = std::uniform_real_distribution<double>(rnd.speed_min, rnd.speed_max)(target_rng);
    }
    build_target_track(target_rng);

    obstacles_ = spec_.obstacles;
    if (rnd.obstacle_jitter_sd > 0.0 || rnd.radius_jitter_sd > 0.0) {
        std::normal_distribution<double> jc(0.0, std::max(rnd.obstacle_jitter_sd, 1e-12));
        std::normal_distribution<double> jr(0.0, std::max(rnd.radius_jitter_sd, 1e-12));
        for (int attempt = 0; attempt < 20; ++attempt) {
            std::vector<Obstacle> cand = spec_.obstacles;
            for (auto& o : cand) {
                o.center += Eigen::Vector2d(jc(layout_rng), jc(layout_rng));
                o.radius = std::max(0.5, o.radius + jr(layout_rng));
            }
            bool ok = true;
            for (std::size_t i = 0; i < cand.size() && ok; ++i) {
                for (std::size_t j = i + 1; j < cand.size(); ++j) {
                    if ((cand[i].center - cand[j].center).norm() < cand[i].radius + cand[j].radius) ok = false;
                }
            }
            if (ok) {
                obstacles_ = std::move(cand);
                break;
            }
        }
    }

    const int n = spec_.n_agents;
    const double step = formation_angle_step(n, spec_.reward.d_min_t, spec_.reward.lambda0_per_agent * n, spec_.hydro);
    const Eigen::Vector2d t0 = target_track_[0];
    const Eigen::Vector2d heading = (target_track_[1] - target_track_[0]).normalized();
    const double psi = std::atan2(heading.y(), heading.x());
    std::normal_distribution<double> jit(0.0, std::max(rnd.spawn_jitter_sd, 1e-12));
    world_.agents.assign(static_cast<std::size_t>(n), AuvState{});
    const auto angles = formation_angles(n, step);
    for (int i = 0; i < n; ++i) {
        const double a = psi + angles[static_cast<std::size_t>(i)];
        AuvState s;
        s.x = t0.x() + spec_.reward.d_min_t * std::cos(a) + (rnd.spawn_jitter_sd > 0 ? jit(spawn_rng) : 0.0);
        s.y = t0.y() + spec_.reward.d_min_t * std::sin(a) + (rnd.spawn_jitter_sd > 0 ? jit(spawn_rng) : 0.0);
        s.theta = 0.0;
        s.u = std::min(target_speed_, spec_.auv.v_max);
        world_.agents[static_cast<std::size_t>(i)] = s;
        if ((s.position() - t0).norm() > detection_range_) {
            throw ConfigError("spawn leaves the target outside detection range of agent " + std::to_string(i));
        }
        for (const auto& o : obstacles_) {
            if (surface_distance(s.position(), o) < 1.0) {
                throw ConfigError("agent " + std::to_string(i) + " spawns inside an obstacle");
            }
        }
    }
    world_.target_pos = t0;
    world_.target_vel = (target_track_[1] - target_track_[0]) / spec_.auv.dt;
    t_ = 0;
    lost_steps_ = 0;
    done_ = false;
    absorbing_ = false;
    reason_ = Termination::kRunning;
    return observe_all();
}

Eigen::VectorXd MultiAuvEnv::observe(int i) const {
    if (absorbing_) {
        return absorbing_observation(spec_.n_agents, spec_.n_obs_slots);
    }
    return auvtrack::observe(world_, obstacles_, i, spec_.n_obs_slots, spec_.hydro);
}

std::vector<Eigen::VectorXd> MultiAuvEnv::observe_all() const {
    std::vector<Eigen::VectorXd> out;
    for (int i = 0; i < spec_.n_agents; ++i) out.push_back(observe(i));
    return out;
}

std::vector<RewardBreakdown> MultiAuvEnv::rewards() const {
    return compute_rewards(world_, obstacles_, spec_.reward, spec_.hydro);
}

void MultiAuvEnv::set_agents(const std::vector<AuvState>& agents) {
    if (static_cast<int>(agents.size()) != spec_.n_agents) {
        throw std::invalid_argument("set_agents: wrong agent count");
    }
    world_.agents = agents;
}

Termination MultiAuvEnv::check_termination() const {
    const auto& ag = world_.agents;
    for (const auto& a : ag) {
        for (const auto& o : obstacles_) {
            if (surface_distance(a.position(), o) < 0.0) return Termination::kObstacleCollision;
        }
    }
    for (std::size_t i = 0; i < ag.size(); ++i) {
        for (std::size_t j = i + 1; j < ag.size(); ++j) {
            if ((ag[i].position() - ag[j].position()).norm() < kAgentCollisionDistance) {
                return Termination::kAgentCollision;
            }
        }
    }
    if (lost_steps_ * spec_.auv.dt >= kLostSeconds - 1e-9) return Termination::kTargetLost;
    if (t_ >= spec_.duration_steps) return Termination::kTimeLimit;
    return Termination::kRunning;
}

StepResult MultiAuvEnv::step(const std::vector<Action>& actions) {
    const int n = spec_.n_agents;
    if (static_cast<int>(actions.size()) != n) {
        throw std::invalid_argument("step: expected " + std::to_string(n) + " actions");
    }
    StepResult res;
    const Eigen::VectorXd absorbing_obs = absorbing_observation(n, spec_.n_obs_slots);
    if (absorbing_) {
        for (int i = 0; i < n; ++i) {
            res.transitions.push_back({absorbing_obs, actions[i], std::nullopt, absorbing_obs, true, true});
        }
        res.rewards.assign(static_cast<std::size_t>(n), RewardBreakdown{});
        res.done = true;
        res.absorbing = true;
        res.reason = reason_;
        return res;
    }
    if (done_) {
        throw std::logic_error("step called on a finished episode; call reset first");
    }

    const auto obs_before = observe_all();
    std::normal_distribution<double> dist(0.0, 1.0);
    const double sd = spec_.randomization.disturbance_sd;
    std::vector<Action> applied(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Action& a = applied[static_cast<std::size_t>(i)];
        a = actions[i];
        a(0) = std::clamp(a(0), 0.0, spec_.auv.v_max);
        a(1) = std::clamp(a(1), -spec_.auv.w_max, spec_.auv.w_max);
        auto& s = world_.agents[static_cast<std::size_t>(i)];
        s = auvtrack::step(s, velocity_controller(s, a(0), a(1), spec_.auv), spec_.auv);
        if (sd > 0.0) {
            s.u = std::clamp(s.u + sd * spec_.auv.dt * dist(disturbance_rng_), -spec_.auv.v_max, spec_.auv.v_max);
            s.v_sway += sd * spec_.auv.dt * dist(disturbance_rng_);
        }
    }
    ++t_;
    const auto tt = static_cast<std::size_t>(std::min<int>(t_, static_cast<int>(target_track_.size()) - 2));
    world_.target_pos = target_track_[tt];
    world_.target_vel = (target_track_[tt + 1] - target_track_[tt]) / spec_.auv.dt;

    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& a : world_.agents) nearest = std::min(nearest, (a.position() - world_.target_pos).norm());
    lost_steps_ = nearest > detection_range_ ? lost_steps_ + 1 : 0;

    res.rewards = rewards();
    reason_ = check_termination();
    res.reason = reason_;
    const bool terminal = reason_ == Termination::kObstacleCollision || reason_ == Termination::kAgentCollision ||
                          reason_ == Termination::kTargetLost;
    done_ = reason_ != Termination::kRunning;
    absorbing_ = terminal;
    res.done = done_;
    res.absorbing = terminal;
    for (int i = 0; i < n; ++i) {
        Transition tr;
        tr.obs = obs_before[static_cast<std::size_t>(i)];
        tr.action = applied[static_cast<std::size_t>(i)];
        tr.next_obs = terminal ? absorbing_obs : auvtrack::observe(world_, obstacles_, i, spec_.n_obs_slots, spec_.hydro);
        tr.absorbing = terminal;
        tr.done = done_;
        res.transitions.push_back(std::move(tr));
    }
    return res;
}

}  // namespace auvtrack
