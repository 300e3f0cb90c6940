#pragma once

#include "auvtrack/scenario.hpp"

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <vector>

namespace auvtrack {

/// (v_des, w_des)
using Action = Eigen::Vector2d;

struct Transition {
    Eigen::VectorXd obs;
    Action action = Action::Zero();
    /// Left empty by the environment; filled only by reward relabelling.
    std::optional<double> reward;
    Eigen::VectorXd next_obs;
    bool absorbing = false;
    bool done = false;
};

struct RewardBreakdown {
    double r_ti = 0.0;
    double r_tc = 0.0;
    double r_o = 0.0;
    double r_l = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

enum class Termination { kRunning, kTimeLimit, kObstacleCollision, kAgentCollision, kTargetLost };
const char* to_string(Termination t);

/// Physical snapshot sufficient to recompute observations and rewards.
struct WorldSnapshot {
    std::vector<AuvState> agents;
    Eigen::Vector2d target_pos = Eigen::Vector2d::Zero();
    Eigen::Vector2d target_vel = Eigen::Vector2d::Zero();
};

/// Distance from p to the obstacle surface (negative inside).
double surface_distance(const Eigen::Vector2d& p, const Obstacle& o);

/// Per-agent rewards for a post-step world. The breakdown's `total` equals
/// w1 (a r_tc + b r_ti) + w2 r_o + w3 r_l with w3 = w3_total / N.
std::vector<RewardBreakdown> compute_rewards(const WorldSnapshot& w, const std::vector<Obstacle>& obstacles,
                                             const RewardWeights& rw, const HydroParams& hp);

/// Observation of agent i: target block, peer blocks (index order), N_o
/// obstacle echo-margin blocks nearest first, absorbing flag (0).
Eigen::VectorXd observe(const WorldSnapshot& w, const std::vector<Obstacle>& obstacles, int i, int n_obs_slots,
                        const HydroParams& hp);

int observation_dim(int n_agents, int n_obs_slots);
/// All-zero observation with the absorbing flag set.
Eigen::VectorXd absorbing_observation(int n_agents, int n_obs_slots);

struct StepResult {
    std::vector<Transition> transitions;
    /// External metric only (never copied into transitions).
    std::vector<RewardBreakdown> rewards;
    bool done = false;
    bool absorbing = false;
    Termination reason = Termination::kRunning;
};

class MultiAuvEnv {
public:
    explicit MultiAuvEnv(ScenarioSpec spec);

    /// Deterministic in (spec, seed). Returns initial observations.
    std::vector<Eigen::VectorXd> reset(std::uint64_t seed);

    /// Actions outside [0, v_max] x [-w_max, w_max] are clamped. Once the
    /// episode has entered the absorbing state every further step returns
    /// absorbing self-transitions with zero reward.
    StepResult step(const std::vector<Action>& actions);

    [[nodiscard]] Eigen::VectorXd observe(int i) const;
    [[nodiscard]] std::vector<Eigen::VectorXd> observe_all() const;
    [[nodiscard]] std::vector<RewardBreakdown> rewards() const;

    [[nodiscard]] const ScenarioSpec& spec() const { return spec_; }
    [[nodiscard]] const WorldSnapshot& world() const { return world_; }
    [[nodiscard]] const std::vector<Obstacle>& obstacles() const { return obstacles_; }
    [[nodiscard]] int t() const { return t_; }
    [[nodiscard]] bool done() const { return done_; }
    [[nodiscard]] bool absorbing() const { return absorbing_; }
    [[nodiscard]] Termination termination() const { return reason_; }
    [[nodiscard]] int n_agents() const { return spec_.n_agents; }
    [[nodiscard]] int obs_dim() const { return observation_dim(spec_.n_agents, spec_.n_obs_slots); }
    [[nodiscard]] double detection_range() const { return detection_range_; }
    [[nodiscard]] double target_speed() const { return target_speed_; }
    /// Precomputed target positions for steps 0..duration.
    [[nodiscard]] const std::vector<Eigen::Vector2d>& target_track() const { return target_track_; }

    /// Test hook: overwrite the vehicle states.
    void set_agents(const std::vector<AuvState>& agents);

    static constexpr double kLostSeconds = 5.0;
    static constexpr double kAgentCollisionDistance = 1.0;

private:
    void build_target_track(std::mt19937_64& rng);
    [[nodiscard]] Termination check_termination() const;

    ScenarioSpec spec_;
    double detection_range_ = 0.0;
    std::vector<Obstacle> obstacles_;
    WorldSnapshot world_;
    std::vector<Eigen::Vector2d> target_track_;
    double target_speed_ = 0.0;
    std::mt19937_64 disturbance_rng_;
    int t_ = 0;
    int lost_steps_ = 0;
    bool done_ = true;
    bool absorbing_ = false;
    Termination reason_ = Termination::kRunning;
};

}  // namespace auvtrack
