#pragma once

#include "auvtrack/env.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace auvtrack {

/// One environment step: observations and actions before the step, the
/// physical world after it.
struct StepRecord {
    std::vector<Eigen::VectorXd> obs;
    std::vector<Action> actions;
    WorldSnapshot world;
    bool absorbing = false;
    bool done = false;
};

/// Whole-episode log. Environment rewards are never stored; they can be
/// recomputed from `steps[t].world` with compute_rewards().
struct EpisodeRecord {
    std::string scenario_id;
    std::string source;  // "expert", "madac", "random", ...
    std::string task;    // free-form task tag, e.g. the scenario id
    int n_agents = 0;
    int n_obs_slots = 3;
    double dt = 0.08;
    double target_speed = 0.0;
    std::uint64_t seed = 0;
    int index = 0;
    std::string termination = "running";
    HydroParams hydro;
    RewardWeights reward;
    std::vector<Obstacle> obstacles;
    WorldSnapshot initial;
    std::vector<StepRecord> steps;
    std::vector<Eigen::VectorXd> final_obs;

    [[nodiscard]] int length() const { return static_cast<int>(steps.size()); }
    /// Observation of agent i at step t, t == length() gives final_obs.
    [[nodiscard]] const Eigen::VectorXd& obs_at(int t, int i) const;
    /// Joint transitions of step t (reward left empty).
    [[nodiscard]] std::vector<Transition> transitions(int t) const;
};

using JointPolicy = std::function<std::vector<Action>(const MultiAuvEnv& env, const std::vector<Eigen::VectorXd>& obs)>;

/// Reset with `seed` and run until done. Absorbing continuation steps are not recorded.
EpisodeRecord run_episode(MultiAuvEnv& env, std::uint64_t seed, const JointPolicy& policy, const std::string& source);

void to_json(nlohmann::json& j, const EpisodeRecord& e);
void from_json(const nlohmann::json& j, EpisodeRecord& e);

/// One episode per line.
void write_episodes(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes);
std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path);

/// Throws ConfigError if any observation does not match the layout that
/// observe() produces from the recorded world.
void validate_layout(const EpisodeRecord& e);

}  // namespace auvtrack
