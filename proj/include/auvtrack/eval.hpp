#pragma once

#include "auvtrack/episode_io.hpp"
#include "auvtrack/scenario.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace auvtrack {

struct MetricsSummary {
    double mean_min_distance = 0.0;
    double std_min_distance = 0.0;
    double mean_consistency = 0.0;
    double std_consistency = 0.0;
    /// Global minimum of vehicle-to-obstacle surface distance, clamped at 0;
    /// infinity without obstacles.
    double min_obstacle_distance = 0.0;
    double danger_time = 0.0;  // s, summed over episodes
    int episodes = 0;
    long steps = 0;
    int target_lost = 0;  // episodes ending with the target out of range
    int collisions = 0;
};

struct MetricsReport {
    MetricsSummary overall;
    /// Breakdown keyed by EpisodeRecord::source.
    std::map<std::string, MetricsSummary> per_source;
};

/// Per-step quantities behind the summary, from the post-step world of step t.
struct StepMetrics {
    double min_distance = 0.0;  // nearest agent to the target, m
    double consistency = 0.0;   // lambda of the agent graph; 0 for one agent
    double min_obstacle_distance = 0.0;  // clamped at 0; infinity without obstacles
    bool danger = false;                 // some agent closer than d_safe to an obstacle surface
};
StepMetrics step_metrics(const EpisodeRecord& e, int t);

/// Throws std::invalid_argument on empty input or mixed agent counts.
MetricsReport compute_metrics(const std::vector<EpisodeRecord>& episodes);

/// Column order: mean_min_distance, std_min_distance, mean_consistency,
/// std_consistency, min_obstacle_distance, danger_time, episodes.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsSummary& m);
void to_json(nlohmann::json& j, const MetricsSummary& m);
void to_json(nlohmann::json& j, const MetricsReport& r);

/// Per-step environment reward of an episode: total reward averaged over
/// agents and recorded steps, recomputed from the stored worlds.
double mean_step_reward(const EpisodeRecord& e);

struct RewardCalibration {
    double random_mean = 0.0;  // per-step reward under uniform random actions
    double expert_mean = 0.0;  // per-step reward of the expert buffer
    int horizon = 0;           // steps of a full episode
};

/// Episode score on the full horizon. Steps missing after an absorbing
/// termination count at the random-policy level.
double episode_score(const EpisodeRecord& e, const RewardCalibration& c);

/// 20 uniform-action rollouts for the random end; the expert buffer for the other.
RewardCalibration calibrate(const ScenarioSpec& spec, const std::vector<EpisodeRecord>& expert, std::uint64_t seed,
                            int random_episodes = 20);

/// (R - R_random) / (R_expert - R_random) with R the mean episode score.
/// Throws DomainError when the calibration is degenerate.
double normalized_reward(const std::vector<EpisodeRecord>& episodes, const RewardCalibration& c);
double normalized_score(double score, const RewardCalibration& c);

/// Uniform actions over the admissible box.
JointPolicy random_policy(std::uint64_t seed);

/// Runs `episodes` rollouts with seeds derived from `seed`; ordered by index.
std::vector<EpisodeRecord> rollout(const ScenarioSpec& spec, const JointPolicy& policy, int episodes,
                                   std::uint64_t seed, const std::string& source);

// ---------------------------------------------------------------- Lemma 1

/// Finite N = 2 Markov game with per-agent rewards.
struct MarkovGame {
    int n_states = 0;
    int n_actions[2] = {0, 0};
    double gamma = 0.9;
    /// P[s][a1 * n_actions[1] + a2] = distribution over next states.
    std::vector<std::vector<Eigen::VectorXd>> transition;
    /// reward[i][s](a1, a2)
    std::vector<Eigen::MatrixXd> reward[2];
    /// policy[i].row(s) = action distribution of agent i at s.
    Eigen::MatrixXd policy[2];
};

MarkovGame random_markov_game(int n_states, int a1, int a2, double gamma, std::uint64_t seed);

/// Exact v_i from (I - gamma P_pi) v = r_pi. Throws NumericFault if singular.
Eigen::VectorXd solve_values(const MarkovGame& g, int agent);

/// f_r(pi, v) = sum_i sum_s (v_i(s) - E_{a_i ~ pi_i} q_i(s, a_i)).
double lemma1_residual(const MarkovGame& g, const Eigen::VectorXd& v0, const Eigen::VectorXd& v1);
/// Residual with the exact values.
double lemma1_residual(const MarkovGame& g);

}  // namespace auvtrack
