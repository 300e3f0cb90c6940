#pragma once

#include "auvtrack/episode_io.hpp"
#include "auvtrack/eval.hpp"
#include "auvtrack/nn/layers.hpp"
#include "auvtrack/nn/optim.hpp"
#include "auvtrack/sac.hpp"
#include "auvtrack/scenario.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace auvtrack {

/// Physical (v, w) to [-1, 1]^2: v affinely over [0, v_max], w over [-w_max, w_max].
Eigen::Vector2d normalize_action(const Action& a, const AuvParams& p);
Action denormalize_action(const Eigen::VectorXd& a, const AuvParams& p);

/// Per-feature input scale for the observation layout (metres, m/s, dB, flag).
Eigen::VectorXd observation_scale(int n_agents, int n_obs_slots);

// ---------------------------------------------------------------- replay

/// Aligned joint minibatch; act holds normalized actions.
struct JointBatch {
    std::vector<nn::Matrix> obs;
    std::vector<nn::Matrix> act;
    std::vector<nn::Matrix> next_obs;
    nn::Matrix next_absorbing;  // B x 1
};

/// Ring buffer of joint transitions (s, a, ., s'). There is no reward slot.
class JointReplay {
public:
    JointReplay() = default;
    JointReplay(int n_agents, int obs_dim, long capacity);

    /// Returns the slot written.
    long add(const std::vector<Eigen::VectorXd>& obs, const std::vector<Eigen::Vector2d>& act,
             const std::vector<Eigen::VectorXd>& next_obs, bool next_absorbing);
    /// Uniform slots with replacement.
    [[nodiscard]] std::vector<long> sample_index(int batch, nn::Rng& rng) const;
    [[nodiscard]] JointBatch sample(int batch, nn::Rng& rng) const { return gather(sample_index(batch, rng)); }
    /// Rows `index` in order.
    [[nodiscard]] JointBatch gather(const std::vector<long>& index) const;

    [[nodiscard]] long size() const { return size_; }
    [[nodiscard]] long capacity() const { return capacity_; }
    [[nodiscard]] int n_agents() const { return n_agents_; }
    [[nodiscard]] int obs_dim() const { return obs_dim_; }

private:
    int n_agents_ = 0;
    int obs_dim_ = 0;
    long capacity_ = 0;
    long size_ = 0;
    long head_ = 0;
    // Flat row-major storage per agent, grown on demand up to capacity.
    std::vector<std::vector<double>> obs_, act_, next_obs_;
    std::vector<std::uint8_t> next_absorbing_;
};

/// Expert transitions from recorded episodes (all steps, normalized actions).
JointReplay replay_from_episodes(const std::vector<EpisodeRecord>& episodes, const AuvParams& p);

/// [obs_0, act_0, obs_1, act_1, ...]
nn::Matrix joint_input(const JointBatch& b);
/// [obs_i, act_i]
nn::Matrix agent_input(const JointBatch& b, int i);

// ---------------------------------------------------------------- discriminator

struct DiscriminatorConfig {
    int hidden = 128;
    int hidden_layers = 2;
    bool spectral = true;
    double gp_coeff = 1.0;
    double lr = 3e-4;
    /// Label replay as 1 and expert as 0 (the literal sign of the update rule);
    /// the relabelled reward then favours policy-like behaviour.
    bool literal_sign = false;
};

struct DiscriminatorStats {
    double bce = 0.0;
    double gp = 0.0;
    double loss = 0.0;
    double d_expert = 0.0;  // mean D on expert samples
    double d_policy = 0.0;
};

/// D(x) = sigmoid(clamp(f(x), -20, 20)) over scaled inputs.
class Discriminator : public nn::Module {
public:
    static constexpr double kLogitClamp = 20.0;
    static constexpr int kMaxPowerIterations = 50;

    Discriminator() = default;
    Discriminator(int input_dim, const DiscriminatorConfig& cfg, Eigen::VectorXd input_scale, std::uint64_t seed);
    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;
    Discriminator(Discriminator&&) = default;
    Discriminator& operator=(Discriminator&&) = default;

    /// Clamped pre-sigmoid activation as a graph.
    [[nodiscard]] nn::Tensor logit(const nn::Matrix& x) const;
    [[nodiscard]] nn::Matrix probability(const nn::Matrix& x) const;
    /// log D - log(1 - D), which equals the clamped logit.
    [[nodiscard]] nn::Matrix reward(const nn::Matrix& x) const;

    /// BCE (expert labelled 1 unless literal_sign) plus gradient penalty; one Adam step.
    DiscriminatorStats update(const nn::Matrix& x_policy, const nn::Matrix& x_expert);
    /// Loss terms without stepping (uses fixed interpolation coefficients).
    DiscriminatorStats evaluate(const nn::Matrix& x_policy, const nn::Matrix& x_expert, const nn::Matrix& eps) const;

    [[nodiscard]] std::vector<double> singular_value_estimates() const;
    [[nodiscard]] const nn::Mlp& mlp() const { return mlp_; }
    [[nodiscard]] const DiscriminatorConfig& config() const { return cfg_; }
    [[nodiscard]] int input_dim() const { return static_cast<int>(mlp_.in_features()); }

    void collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const override;

private:
    [[nodiscard]] nn::Matrix scaled(const nn::Matrix& x) const;
    DiscriminatorStats loss_terms(const nn::Matrix& x_policy, const nn::Matrix& x_expert, const nn::Matrix& eps,
                                  nn::Tensor* total) const;

    DiscriminatorConfig cfg_;
    nn::Mlp mlp_;
    Eigen::VectorXd scale_;
    nn::Adam opt_;
    nn::Rng rng_;
};

/// Per-agent rewards for a joint batch. A single (centralized) discriminator
/// gives every agent the same column; one per agent scores its own (s, a).
std::vector<nn::Matrix> relabel_rewards(const std::vector<Discriminator>& discriminators, const JointBatch& b);

// ---------------------------------------------------------------- training

enum class RewardSource { kDiscriminator, kEnvironment };

struct MadacConfig {
    long env_steps = 150000;
    long warmup_steps = 5000;
    /// Gradient steps happen on every `update_every`-th environment step.
    int update_every = 1;
    int batch = 256;
    int hidden = 128;
    int hidden_layers = 2;
    double lr = 3e-4;
    double gamma = 0.99;
    double tau = 0.005;
    double init_alpha = 0.2;
    DiscriminatorConfig disc;
    /// One discriminator per agent over its own (s, a).
    bool decentralized = false;
    /// Critics also see the other agents' observations and actions.
    bool centralized_critic = false;
    RewardSource reward_source = RewardSource::kDiscriminator;
    long replay_capacity = 1000000;
    /// Abort when the normalized reward stays below the threshold this long.
    int divergence_episodes = 50;
    double divergence_threshold = -1.0;
    std::uint64_t seed = 0;
};

struct CurveRow {
    int episode = 0;
    long env_steps = 0;
    double env_reward = 0.0;  // per-step mean, metric only
    double normalized_reward = 0.0;
    double d_loss = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double alpha = 0.0;
    std::string termination;
};

struct MadacResult {
    std::vector<SacAgent> agents;
    std::vector<Discriminator> discriminators;
    std::vector<CurveRow> curve;
    long env_steps = 0;
    bool aborted = false;
};

using TrainProgress = std::function<void(const CurveRow&)>;

/// Rollouts, discriminator steps and SAC steps interleaved per environment
/// step. The environment reward is only logged unless reward_source says otherwise.
MadacResult train_madac(const ScenarioSpec& spec, const std::vector<EpisodeRecord>& expert, const MadacConfig& cfg,
                        const RewardCalibration* calibration = nullptr, const TrainProgress& progress = {});

/// Deterministic decentralized execution.
JointPolicy make_joint_policy(const std::vector<SacAgent>& agents, const AuvParams& p);

/// Per-agent SAC configuration used by the trainer.
SacConfig agent_sac_config(const ScenarioSpec& spec, const MadacConfig& cfg, int agent);

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& curve);

void save_agents(const std::filesystem::path& path, const std::vector<SacAgent>& agents);
/// Agents must already have the right architecture.
void load_agents(const std::filesystem::path& path, std::vector<SacAgent>& agents);

/// Deterministic rollouts of the policy in every scenario; source "madac".
std::vector<EpisodeRecord> export_offline(const JointPolicy& policy, const std::vector<ScenarioSpec>& specs,
                                          int episodes_per_scenario, std::uint64_t seed);

}  // namespace auvtrack
