#include "auvtrack/expert.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/nn/checkpoint.hpp"
#include "auvtrack/seeding.hpp"
#include "auvtrack/swarm.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <mutex>
#include <thread>

namespace auvtrack {

void ApfParams::validate(double d_safe) const {
    if (!(k_att > 0.0) || !(k_rep > 0.0)) throw ConfigError("apf: gains must be positive");
    if (rho0 < d_safe) throw ConfigError("apf: rho0 must be at least d_safe");
    if (!(standoff > 0.0) || !(speed_factor > 0.0) || !(rho0_peer > 0.0)) {
        throw ConfigError("apf: standoff, speed_factor and rho0_peer must be positive");
    }
    for (double a : formation_angles) {
        if (!std::isfinite(a)) throw ConfigError("apf: non-finite formation angle");
    }
}

ApfParams default_apf(const ScenarioSpec& spec) {
    ApfParams p;
    p.standoff = spec.reward.d_min_t;
    const int n = spec.n_agents;
    const double step = formation_angle_step(n, p.standoff, spec.reward.lambda0_per_agent * n, spec.hydro);
    p.formation_angles = formation_angles(n, step);
    return p;
}

namespace {

// -grad of 0.5 k (1/rho - 1/rho0)^2 along the unit vector pointing away.
Eigen::Vector2d firas(double rho, const Eigen::Vector2d& away, double k, double rho0) {
    if (rho >= rho0) return Eigen::Vector2d::Zero();
    rho = std::max(rho, 1e-3);
    return k * (1.0 / rho - 1.0 / rho0) / (rho * rho) * away;
}

Eigen::Vector2d unit_or_x(const Eigen::Vector2d& v) {
    const double n = v.norm();
    return n > 1e-12 ? Eigen::Vector2d(v / n) : Eigen::Vector2d::UnitX();
}

}  // namespace

Eigen::Vector2d apf_velocity(const Eigen::Vector2d& agent_pos, int agent_index, const Eigen::Vector2d& target_pos,
                             const Eigen::Vector2d& target_vel, double target_heading,
                             const std::vector<Eigen::Vector2d>& peers, const std::vector<Obstacle>& obstacles,
                             const ApfParams& p) {
    if (agent_index < 0 || agent_index >= static_cast<int>(p.formation_angles.size())) {
        throw DomainError("apf: agent index has no formation slot");
    }
    const double a = target_heading + p.formation_angles[static_cast<std::size_t>(agent_index)];
    const Eigen::Vector2d slot = target_pos + p.standoff * Eigen::Vector2d(std::cos(a), std::sin(a));
    Eigen::Vector2d v = target_vel + p.k_att * (slot - agent_pos);
    for (const auto& o : obstacles) {
        const Eigen::Vector2d d = agent_pos - o.center;
        v += firas(d.norm() - o.radius, unit_or_x(d), p.k_rep, p.rho0);
    }
    for (const auto& q : peers) {
        const Eigen::Vector2d d = agent_pos - q;
        v += firas(d.norm(), unit_or_x(d), p.k_rep, p.rho0_peer);
    }
    return v;
}

Waypoint apf_step(const Eigen::Vector2d& agent_pos, int agent_index, const Eigen::Vector2d& target_pos,
                  const Eigen::Vector2d& target_vel, double target_heading, const std::vector<Eigen::Vector2d>& peers,
                  const std::vector<Obstacle>& obstacles, const ApfParams& p, double dt) {
    if (!agent_pos.allFinite() || !target_pos.allFinite() || !target_vel.allFinite()) {
        throw DomainError("apf: non-finite position");
    }
    for (const auto& o : obstacles) {
        if ((agent_pos - o.center).norm() < o.radius) throw DomainError("apf: agent inside an obstacle");
    }
    Eigen::Vector2d v =
        apf_velocity(agent_pos, agent_index, target_pos, target_vel, target_heading, peers, obstacles, p);
    const double cap = p.speed_factor * std::max(target_vel.norm(), p.min_ref_speed);
    const double sp = v.norm();
    if (sp > cap) v *= cap / sp;
    return {agent_pos + dt * v, v};
}

Eigen::VectorXd tracker_observation(const AuvState& s, const Waypoint& wp) {
    const double c = std::cos(s.theta);
    const double sn = std::sin(s.theta);
    const Eigen::Vector2d d = wp.position - s.position();
    Eigen::VectorXd o(kTrackerObsDim);
    const Eigen::Vector2d db(c * d.x() + sn * d.y(), -sn * d.x() + c * d.y());
    // Saturating direction terms keep resolution near the waypoint.
    const Eigen::Vector2d dir = db / (db.norm() + 0.3);
    o << db.x(), db.y(), c * wp.velocity.x() + sn * wp.velocity.y(), -sn * wp.velocity.x() + c * wp.velocity.y(),
        s.u, dir.x(), dir.y();
    return o;
}

Action tracker_command(const Eigen::VectorXd& raw, const AuvParams& p) {
    const double h = 0.5 * (std::clamp(raw(0), -1.0, 1.0) + 1.0);
    return {h * h * p.v_max, std::clamp(raw(1), -1.0, 1.0) * p.w_max};
}

namespace {

AuvState advance(const AuvState& s, const Action& a, const AuvParams& p) {
    return step(s, velocity_controller(s, a(0), a(1), p), p);
}

// One scripted evaluation rollout; returns mean position error over t >= from.
template <class Policy>
double scripted_error(const Policy& act, const AuvParams& p, const AuvState& s0, const Eigen::Vector2d& wp0,
                      const Eigen::Vector2d& vel, int steps, int from) {
    AuvState s = s0;
    Eigen::Vector2d w = wp0;
    double acc = 0.0;
    int cnt = 0;
    for (int t = 0; t < steps; ++t) {
        const Eigen::Vector2d next = w + p.dt * vel;
        s = advance(s, act(s, Waypoint{next, vel}), p);
        w = next;
        if (t >= from) {
            acc += (s.position() - w).norm();
            ++cnt;
        }
    }
    return acc / std::max(cnt, 1);
}

template <class Policy>
TrackerEval evaluate_policy(const Policy& act, const AuvParams& p) {
    TrackerEval e;
    e.stationary_error = scripted_error(act, p, AuvState{}, {5.0, 0.0}, Eigen::Vector2d::Zero(), 300, 275);
    AuvState moving;
    moving.u = 1.2;
    e.moving_error = scripted_error(act, p, moving, Eigen::Vector2d::Zero(), {1.2, 0.0}, 300, 125);
    return e;
}

// Randomised waypoint stream used for training.
class WaypointScript {
public:
    WaypointScript(const AuvState& s, double stationary_fraction, nn::Rng& rng) {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const double bearing = (2.0 * u01(rng) - 1.0) * std::numbers::pi;
        if (u01(rng) < stationary_fraction) {
            const double r = 0.5 + 7.5 * u01(rng);
            pos_ = s.position() + r * Eigen::Vector2d(std::cos(s.theta + bearing), std::sin(s.theta + bearing));
            speed_ = 0.0;
            stationary_ = true;
        } else {
            const double r = 3.0 * u01(rng);
            pos_ = s.position() + r * Eigen::Vector2d(std::cos(bearing), std::sin(bearing));
            speed_ = 0.3 + 1.5 * u01(rng);
            heading_ = s.theta + (2.0 * u01(rng) - 1.0) * 0.8;
        }
    }

    Waypoint next(double dt, nn::Rng& rng) {
        if (!stationary_) {
            std::normal_distribution<double> n01(0.0, 1.0);
            omega_ = std::clamp(omega_ + 0.02 * n01(rng), -0.2, 0.2);
            speed_ = std::clamp(speed_ + 0.02 * n01(rng), 0.0, 1.9);
            heading_ += omega_ * dt;
        }
        const Eigen::Vector2d vel = speed_ * Eigen::Vector2d(std::cos(heading_), std::sin(heading_));
        pos_ += dt * vel;
        return {pos_, vel};
    }

    [[nodiscard]] double initial_speed() const { return speed_; }

private:
    Eigen::Vector2d pos_;
    double speed_ = 0.0;
    double heading_ = 0.0;
    double omega_ = 0.0;
    bool stationary_ = false;
};

}  // namespace

WaypointTracker::WaypointTracker(AuvParams auv, SacConfig cfg) : auv_(std::move(auv)), agent_(std::move(cfg)) {}

Action WaypointTracker::act(const AuvState& s, const Waypoint& wp) const {
    const nn::Matrix a = agent_.mean_action(tracker_observation(s, wp).transpose());
    return tracker_command(a.row(0).transpose(), auv_);
}

TrackerEval WaypointTracker::evaluate() const {
    return evaluate_policy([this](const AuvState& s, const Waypoint& w) { return act(s, w); }, auv_);
}

void WaypointTracker::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, agent_.state()); }
void WaypointTracker::load(const std::filesystem::path& path) { nn::load_checkpoint(path, agent_.state()); }
std::string WaypointTracker::parameter_bytes() const { return nn::checkpoint_bytes(agent_.state()); }

SacConfig tracker_sac_config(const TrackerTrainConfig& cfg, std::uint64_t seed) {
    SacConfig sc;
    sc.obs_dim = kTrackerObsDim;
    sc.hidden = cfg.hidden;
    sc.hidden_layers = cfg.hidden_layers;
    sc.batch = cfg.batch;
    sc.lr = cfg.lr;
    sc.gamma = cfg.gamma;
    sc.init_alpha = 0.1;
    sc.target_entropy = cfg.target_entropy;
    sc.obs_scale = (Eigen::VectorXd(kTrackerObsDim) << 0.5, 0.5, 0.5, 0.5, 0.5, 1.0, 1.0).finished();
    sc.seed = derive_seed(seed, {1});
    return sc;
}

TrackerTrainResult train_waypoint_tracker(const AuvParams& auv, std::uint64_t seed, const TrackerTrainConfig& cfg) {
    TrackerTrainResult res;
    res.tracker = std::make_unique<WaypointTracker>(auv, tracker_sac_config(cfg, seed));
    SacAgent& agent = res.tracker->agent();
    nn::Rng rng(derive_seed(seed, {2}));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    const long cap = std::max<long>(cfg.budget_steps, 1);
    const int d = kTrackerObsDim;
    nn::Matrix obs_buf(cap, d), next_buf(cap, d), act_buf(cap, 2), rew_buf(cap, 1);
    long size = 0;

    AuvState s;
    std::unique_ptr<WaypointScript> script;
    Waypoint wp;
    int ep_t = cfg.episode_steps;
    double ep_reward = 0.0;
    double last_reward = 0.0;
    std::vector<nn::NamedTensor> best;
    bool have_best = false;

    for (long step = 0; step < cfg.budget_steps; ++step) {
        if (ep_t >= cfg.episode_steps) {
            if (step > 0) last_reward = ep_reward;
            s = AuvState{};
            s.theta = (2.0 * u01(rng) - 1.0) * std::numbers::pi;
            script = std::make_unique<WaypointScript>(s, cfg.stationary_fraction, rng);
            s.u = std::clamp(script->initial_speed() + 0.3 * (2.0 * u01(rng) - 1.0), 0.0, 1.5);
            wp = script->next(auv.dt, rng);
            ep_t = 0;
            ep_reward = 0.0;
        }
        const Eigen::VectorXd o = tracker_observation(s, wp);
        Eigen::VectorXd raw(2);
        if (step < cfg.warmup_steps) {
            raw << 2.0 * u01(rng) - 1.0, 2.0 * u01(rng) - 1.0;
        } else {
            raw = agent.act(o, false);
        }
        s = advance(s, tracker_command(raw, auv), auv);
        const double r = -(s.position() - wp.position).norm() - (s.world_velocity() - wp.velocity).squaredNorm();
        ep_reward += r;
        const Waypoint next_wp = script->next(auv.dt, rng);
        obs_buf.row(size) = o.transpose();
        act_buf.row(size) = raw.transpose();
        rew_buf(size, 0) = r;
        next_buf.row(size) = tracker_observation(s, next_wp).transpose();
        ++size;
        wp = next_wp;
        ++ep_t;

        if (step >= cfg.warmup_steps && size >= cfg.batch) {
            SacBatch b;
            b.obs.resize(cfg.batch, d);
            b.next_obs.resize(cfg.batch, d);
            b.act.resize(cfg.batch, 2);
            b.rew.resize(cfg.batch, 1);
            b.mask = nn::Matrix::Ones(cfg.batch, 1);
            std::uniform_int_distribution<long> pick(0, size - 1);
            for (int k = 0; k < cfg.batch; ++k) {
                const long j = pick(rng);
                b.obs.row(k) = obs_buf.row(j);
                b.next_obs.row(k) = next_buf.row(j);
                b.act.row(k) = act_buf.row(j);
                b.rew(k, 0) = rew_buf(j, 0);
            }
            agent.update(b);
        }

        const long done_steps = step + 1;
        if (done_steps > cfg.warmup_steps && (done_steps % cfg.eval_every == 0 || done_steps == cfg.budget_steps)) {
            const TrackerEval e = res.tracker->evaluate();
            res.curve.push_back({done_steps, last_reward, e.stationary_error, e.moving_error});
            spdlog::debug("tracker step {} reward {:.2f} stationary {:.3f} moving {:.3f}", done_steps, last_reward,
                          e.stationary_error, e.moving_error);
            if (!have_best || e.score() < res.eval.score()) {
                res.eval = e;
                res.steps_used = done_steps;
                best = agent.state();
                for (auto& b : best) b.tensor = nn::Tensor::constant(b.tensor.value());
                have_best = true;
            }
            if (e.stationary_error < cfg.early_stop_stationary && e.moving_error < cfg.early_stop_moving) break;
        }
    }
    if (have_best) {
        auto live = agent.state();
        for (std::size_t k = 0; k < live.size(); ++k) live[k].tensor.mutable_value() = best[k].tensor.value();
    }
    if (!res.passed()) {
        spdlog::warn("waypoint tracker did not reach the error threshold within {} steps", cfg.budget_steps);
    }
    return res;
}

EpisodeRecord run_expert_episode(const ScenarioSpec& spec, const WaypointTracker& tracker, const ApfParams& apf,
                                 std::uint64_t episode_seed, ExpertEpisodeStats* stats) {
    MultiAuvEnv env(spec);
    double err_sum = 0.0;
    double err_max = 0.0;
    long err_n = 0;
    double clearance = std::numeric_limits<double>::infinity();
    const int n = spec.n_agents;
    std::vector<Eigen::Vector2d> particles;
    const double dt = spec.auv.dt;
    JointPolicy policy = [&](const MultiAuvEnv& e, const std::vector<Eigen::VectorXd>&) {
        const auto& w = e.world();
        if (e.t() == 0) {
            particles.clear();
            for (const auto& a : w.agents) particles.push_back(a.position());
        } else {
            for (int i = 0; i < n; ++i) {
                const double d = (w.agents[static_cast<std::size_t>(i)].position() -
                                  particles[static_cast<std::size_t>(i)]).norm();
                err_sum += d;
                err_max = std::max(err_max, d);
                ++err_n;
            }
        }
        const Eigen::Vector2d tv = w.target_vel;
        const double heading = std::atan2(tv.y(), tv.x());
        std::vector<Eigen::Vector2d> next(particles.size());
        std::vector<Action> actions(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            std::vector<Eigen::Vector2d> peers;
            for (int j = 0; j < n; ++j) {
                if (j != i) peers.push_back(particles[static_cast<std::size_t>(j)]);
            }
            const Waypoint wp = apf_step(particles[static_cast<std::size_t>(i)], i, w.target_pos, tv, heading, peers,
                                         e.obstacles(), apf, dt);
            for (const auto& o : e.obstacles()) {
                const double c = surface_distance(wp.position, o);
                if (c < 0.0) throw DomainError("apf particle entered an obstacle");
                clearance = std::min(clearance, c);
            }
            next[static_cast<std::size_t>(i)] = wp.position;
            actions[static_cast<std::size_t>(i)] = tracker.act(w.agents[static_cast<std::size_t>(i)], wp);
        }
        particles = std::move(next);
        return actions;
    };
    EpisodeRecord rec = run_episode(env, episode_seed, policy, "expert");
    if (stats != nullptr) {
        stats->mean_tracking_error = err_n > 0 ? err_sum / static_cast<double>(err_n) : 0.0;
        stats->max_tracking_error = err_max;
        stats->min_particle_clearance = clearance;
    }
    return rec;
}

ExpertBuffer collect_demonstrations(const ScenarioSpec& spec, const WaypointTracker& tracker, const ApfParams& apf,
                                    int episodes, std::uint64_t seed, int jobs, CollectStats* stats) {
    apf.validate(spec.reward.d_safe);
    if (static_cast<int>(apf.formation_angles.size()) != spec.n_agents) {
        throw ConfigError("apf: formation angle count does not match the agent count");
    }
    ExpertBuffer out(static_cast<std::size_t>(std::max(episodes, 0)));
    std::vector<int> discarded(out.size(), 0);
    constexpr int kMaxAttempts = 50;
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&]() {
        for (int k = next++; k < episodes; k = next++) {
            try {
                for (int attempt = 0;; ++attempt) {
                    if (attempt == kMaxAttempts) {
                        throw ConfigError("expert: episode " + std::to_string(k) + " kept terminating abnormally");
                    }
                    const std::uint64_t es = derive_seed(seed, {static_cast<std::uint64_t>(k),
                                                                static_cast<std::uint64_t>(attempt)});
                    EpisodeRecord rec = run_expert_episode(spec, tracker, apf, es);
                    if (rec.termination == to_string(Termination::kTimeLimit)) {
                        rec.index = k;
                        rec.task = spec.id;
                        out[static_cast<std::size_t>(k)] = std::move(rec);
                        break;
                    }
                    ++discarded[static_cast<std::size_t>(k)];
                    spdlog::info("expert episode {} attempt {} ended with {}; resampling", k, attempt,
                                 rec.termination);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(failure_mu);
                if (!failure) failure = std::current_exception();
                next = episodes;
            }
        }
    };
    const int nthreads = std::clamp(jobs, 1, std::max(episodes, 1));
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    if (stats != nullptr) {
        stats->discarded = 0;
        for (int d : discarded) stats->discarded += d;
    }
    return out;
}

}  // namespace auvtrack
