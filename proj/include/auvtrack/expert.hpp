#pragma once

#include "auvtrack/episode_io.hpp"
#include "auvtrack/sac.hpp"
#include "auvtrack/scenario.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <memory>
#include <vector>

namespace auvtrack {

struct ApfParams {
    double k_att = 1.0;
    double k_rep = 80.0;
    double rho0 = 10.0;  // obstacle cutoff, m
    /// Peer cutoff. Kept below the slot chord so peers do not push the ring apart.
    double rho0_peer = 3.0;
    double standoff = 12.0;
    std::vector<double> formation_angles;  // relative to target heading
    double speed_factor = 1.25;
    /// Lower bound on the reference speed used for saturation.
    double min_ref_speed = 0.5;

    /// Throws ConfigError.
    void validate(double d_safe) const;
};

/// Slot ring matching the scenario's formation target lambda0 * N.
ApfParams default_apf(const ScenarioSpec& spec);

struct Waypoint {
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
};

/// Velocity field -grad U plus the target velocity feedforward, before saturation.
Eigen::Vector2d apf_velocity(const Eigen::Vector2d& agent_pos, int agent_index, const Eigen::Vector2d& target_pos,
                             const Eigen::Vector2d& target_vel, double target_heading,
                             const std::vector<Eigen::Vector2d>& peers, const std::vector<Obstacle>& obstacles,
                             const ApfParams& p);

/// Next particle waypoint: position + dt * v with v = apf_velocity saturated at
/// speed_factor * max(|target_vel|, min_ref_speed). Throws DomainError if the
/// agent is inside an obstacle.
Waypoint apf_step(const Eigen::Vector2d& agent_pos, int agent_index, const Eigen::Vector2d& target_pos,
                  const Eigen::Vector2d& target_vel, double target_heading, const std::vector<Eigen::Vector2d>& peers,
                  const std::vector<Obstacle>& obstacles, const ApfParams& p, double dt);

/// Tracker input: waypoint offset and velocity in the body frame, surge speed,
/// then the offset divided by (|offset| + 0.3).
Eigen::VectorXd tracker_observation(const AuvState& s, const Waypoint& wp);
constexpr int kTrackerObsDim = 7;

/// Maps a squashed action to (v_des, w_des). Surge is quadratic in (a + 1) / 2,
/// which leaves fine resolution near standstill without a flat region.
Action tracker_command(const Eigen::VectorXd& raw, const AuvParams& p);

struct TrackerEval {
    double stationary_error = 0.0;  // mean over the last 2 s, waypoint 5 m ahead
    double moving_error = 0.0;      // mean after 10 s, waypoint at 1.2 m/s
    [[nodiscard]] bool passed() const { return stationary_error < 0.2 && moving_error < 0.5; }
    /// Largest error relative to its threshold; below 1 means passed.
    [[nodiscard]] double score() const { return std::max(stationary_error / 0.2, moving_error / 0.5); }
};

struct TrackerCurvePoint {
    long step = 0;
    double episode_reward = 0.0;
    double stationary_error = 0.0;
    double moving_error = 0.0;
};

struct TrackerTrainConfig {
    long budget_steps = 150000;
    long warmup_steps = 2000;
    int episode_steps = 300;
    /// Share of training episodes whose waypoint does not move.
    double stationary_fraction = 0.4;
    double target_entropy = -4.0;
    long eval_every = 2500;
    /// Training stops early once both errors fall below these.
    double early_stop_stationary = 0.1;
    double early_stop_moving = 0.2;
    int hidden = 64;
    int hidden_layers = 2;
    int batch = 128;
    double lr = 5e-4;
    double gamma = 0.99;
};

/// Waypoint-following SAC policy.
class WaypointTracker {
public:
    WaypointTracker(AuvParams auv, SacConfig cfg);

    [[nodiscard]] Action act(const AuvState& s, const Waypoint& wp) const;
    [[nodiscard]] TrackerEval evaluate() const;

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);
    [[nodiscard]] std::string parameter_bytes() const;

    SacAgent& agent() { return agent_; }
    [[nodiscard]] const AuvParams& auv() const { return auv_; }

private:
    AuvParams auv_;
    SacAgent agent_;
};

SacConfig tracker_sac_config(const TrackerTrainConfig& cfg, std::uint64_t seed);

struct TrackerTrainResult {
    std::unique_ptr<WaypointTracker> tracker;
    std::vector<TrackerCurvePoint> curve;
    TrackerEval eval;
    long steps_used = 0;
    [[nodiscard]] bool passed() const { return eval.passed(); }
};

/// Trains for the budget (or until the early-stop errors are met) and keeps
/// the best evaluated checkpoint. If that checkpoint misses the thresholds the
/// result reports failure and carries the learning curve.
TrackerTrainResult train_waypoint_tracker(const AuvParams& auv, std::uint64_t seed, const TrackerTrainConfig& cfg = {});

using ExpertBuffer = std::vector<EpisodeRecord>;

struct CollectStats {
    int discarded = 0;
};

/// Sim1 particles and the sim2 environment advance in lockstep; each agent's
/// tracker follows its particle. Episodes that end in an absorbing state are
/// discarded and redrawn. Output order follows episode index.
ExpertBuffer collect_demonstrations(const ScenarioSpec& spec, const WaypointTracker& tracker, const ApfParams& apf,
                                    int episodes, std::uint64_t seed, int jobs = 1, CollectStats* stats = nullptr);

struct ExpertEpisodeStats {
    double mean_tracking_error = 0.0;  // vehicle to its particle, m
    double max_tracking_error = 0.0;
    double min_particle_clearance = 0.0;  // particle to obstacle surface, m
};

/// Single episode (no resampling).
EpisodeRecord run_expert_episode(const ScenarioSpec& spec, const WaypointTracker& tracker, const ApfParams& apf,
                                 std::uint64_t episode_seed, ExpertEpisodeStats* stats = nullptr);

}  // namespace auvtrack
