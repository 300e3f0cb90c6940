#include "auvtrack/baseline.hpp"

#include "auvtrack/seeding.hpp"

#include <cmath>

namespace auvtrack {

BaselineResult sac_ctde_baseline(ScenarioSpec spec, RewardSetting setting, MadacConfig cfg, int eval_episodes,
                                 const RewardCalibration* calibration, const TrainProgress& progress) {
    spec.setting = setting;
    spec.reward = RewardWeights::for_setting(setting);
    spec.validate();
    cfg.reward_source = RewardSource::kEnvironment;
    cfg.centralized_critic = true;

    MadacResult trained = train_madac(spec, {}, cfg, calibration, progress);
    BaselineResult out;
    out.agents = std::move(trained.agents);
    out.curve = std::move(trained.curve);
    out.aborted = trained.aborted;
    if (eval_episodes > 0) {
        const JointPolicy pol = make_joint_policy(out.agents, spec.auv);
        out.episodes = rollout(spec, pol, eval_episodes, derive_seed(cfg.seed, {5}), "sac_ctde");
        out.metrics = compute_metrics(out.episodes);
        for (const auto& e : out.episodes) out.tracking_failures += tracking_failure(e) ? 1 : 0;
    }
    return out;
}

bool tracking_failure(const EpisodeRecord& e) {
    if (e.termination == to_string(Termination::kTargetLost)) return true;
    const int window = static_cast<int>(std::lround(5.0 / e.dt));
    std::vector<int> away(static_cast<std::size_t>(e.n_agents), 0);
    for (const auto& st : e.steps) {
        for (int i = 0; i < e.n_agents; ++i) {
            const AuvState& a = st.world.agents[static_cast<std::size_t>(i)];
            const Eigen::Vector2d to_target = st.world.target_pos - a.position();
            const Eigen::Vector2d bow(std::cos(a.theta), std::sin(a.theta));
            const bool turned = to_target.norm() > e.reward.d_min_t && bow.dot(to_target) < 0.0;
            int& run = away[static_cast<std::size_t>(i)];
            run = turned ? run + 1 : 0;
            if (run >= window) return true;
        }
    }
    return false;
}

}  // namespace auvtrack
