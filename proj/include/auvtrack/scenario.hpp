#pragma once

#include "auvtrack/acoustics.hpp"
#include "auvtrack/dynamics.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace auvtrack {

struct Obstacle {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double radius = 1.0;
};

enum class PathKind { kLine, kSine, kArc, kWaypointSpline };

/// Target centre-line. All kinds start at `start` heading `heading`.
struct TargetPathSpec {
    PathKind kind = PathKind::kLine;
    double speed = 1.2;  // m/s
    Eigen::Vector2d start = Eigen::Vector2d::Zero();
    double heading = 0.0;
    /// +1 turns left (counter-clockwise), -1 right; used by arc and sine.
    int turn = 1;
    /// Radius of the base arc; 0 keeps sine paths on a straight base line.
    double turn_radius = 0.0;
    double amplitude = 0.0;   // sine lateral amplitude
    double wavelength = 1.0;  // sine wavelength
    std::vector<Eigen::Vector2d> waypoints;
};

struct Randomization {
    double obstacle_jitter_sd = 0.0;
    double radius_jitter_sd = 0.0;
    double speed_min = 0.0;  // target speed drawn per episode when speed_max > speed_min
    double speed_max = 0.0;
    /// Probability per step that the target picks a new lateral offset.
    double deviation_prob = 0.0;
    double deviation_max = 0.0;  // m
    double spawn_jitter_sd = 0.5;
    double disturbance_sd = 0.0;  // m/s^2 additive on body velocities
};

enum class RewardSetting { kCooperative, kMixed, kSplit };

struct RewardWeights {
    double w1 = -0.25;
    double w2 = -0.4;
    double w3_total = -0.2;  // w3 = w3_total / N
    double a = 1.0;
    double b = 0.0;
    double d_min_t = 12.0;
    double d_safe = 8.0;
    double lambda_max_per_agent = 52.0;
    double lambda0_per_agent = 50.0;

    static RewardWeights for_setting(RewardSetting s);
};

struct ScenarioSpec {
    std::string id = "1";
    int n_agents = 2;
    int duration_steps = 1125;
    int n_obs_slots = 3;
    HydroParams hydro;
    AuvParams auv;
    RewardSetting setting = RewardSetting::kCooperative;
    RewardWeights reward;
    std::vector<Obstacle> obstacles;
    TargetPathSpec target;
    Randomization randomization;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

/// Known ids: 1, 2-cw, 2-ccw (2 aliases 2-cw), 3, 4, 5, G1, G2.
ScenarioSpec make_scenario(const std::string& id, int n_agents, std::uint64_t seed);
std::vector<std::string> scenario_ids();

/// Arc-length parametrised polyline of the target centre-line.
class TargetPath {
public:
    TargetPath() = default;
    /// Builds a path at least `length` metres long.
    TargetPath(const TargetPathSpec& spec, double length);

    [[nodiscard]] Eigen::Vector2d point(double s) const;
    /// Unit tangent at arc length s.
    [[nodiscard]] Eigen::Vector2d tangent(double s) const;
    [[nodiscard]] double length() const { return length_; }
    /// Distance from p to the polyline.
    [[nodiscard]] double distance_to(const Eigen::Vector2d& p) const;

private:
    std::vector<Eigen::Vector2d> pts_;
    double ds_ = 0.05;
    double length_ = 0.0;
};

std::string to_string(PathKind k, int turn);
std::string to_string(RewardSetting s);
RewardSetting reward_setting_from_string(const std::string& s);

void to_json(nlohmann::json& j, const Obstacle& o);
void from_json(const nlohmann::json& j, Obstacle& o);
void to_json(nlohmann::json& j, const ScenarioSpec& s);
void from_json(const nlohmann::json& j, ScenarioSpec& s);
void to_json(nlohmann::json& j, const HydroParams& h);
void from_json(const nlohmann::json& j, HydroParams& h);
void to_json(nlohmann::json& j, const AuvParams& p);
void from_json(const nlohmann::json& j, AuvParams& p);

}  // namespace auvtrack
