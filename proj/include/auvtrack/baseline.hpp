#pragma once

#include "auvtrack/eval.hpp"
#include "auvtrack/madac.hpp"

#include <cstdint>
#include <vector>

namespace auvtrack {

/// Reward-function baseline: SAC agents with a centralized critic over the
/// peers' (s, a), trained on the environment reward of the chosen setting.
struct BaselineResult {
    std::vector<SacAgent> agents;
    std::vector<CurveRow> curve;
    std::vector<EpisodeRecord> episodes;  // deterministic evaluation rollouts
    MetricsReport metrics;
    /// Evaluation episodes flagged by tracking_failure().
    int tracking_failures = 0;
    bool aborted = false;
};

/// `cfg.reward_source` and `cfg.centralized_critic` are overridden.
BaselineResult sac_ctde_baseline(ScenarioSpec spec, RewardSetting setting, MadacConfig cfg, int eval_episodes,
                                 const RewardCalibration* calibration = nullptr, const TrainProgress& progress = {});

/// The target was lost, or some agent beyond the standoff kept its bow
/// pointed away from the target for 5 s in a row.
bool tracking_failure(const EpisodeRecord& e);

}  // namespace auvtrack
