#pragma once

#include "auvtrack/episode_io.hpp"
#include "auvtrack/nn/layers.hpp"
#include "auvtrack/nn/optim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace auvtrack {

struct GdtConfig {
    int context = 20;  // K
    int z_dim = 16;
    int embed = 128;
    int blocks = 3;
    int mlp_hidden = 128;
    int max_timestep = 2048;
    double lr = 1e-4;
    int batch = 16;
    long steps = 1500;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;

    /// Number of demonstration states the encoder sees for one window:
    /// the window itself plus K - 1 steps beyond its end.
    [[nodiscard]] int him_span() const { return 2 * context - 1; }
};

/// Anti-causal hindsight encoder: a causal decoder stack run over the
/// time-reversed state sequence, so the feature at step t depends only on
/// states at t and later.
class HimEncoder : public nn::Module {
public:
    HimEncoder() = default;
    HimEncoder(int state_dim, const GdtConfig& cfg, Eigen::VectorXd state_scale, nn::Rng& rng);

    /// states: (batch * seq) x ds in forward time order; `length[b]` leading
    /// rows of each sequence are real, the rest padding. Returns
    /// (batch * seq) x dz, row t of a sequence summarising its rows t..length-1.
    [[nodiscard]] nn::Tensor forward(const nn::Matrix& states, Eigen::Index batch, Eigen::Index seq,
                                     const std::vector<int>& length) const;

    /// Single sequence, T x ds -> T x dz.
    [[nodiscard]] nn::Matrix encode(const nn::Matrix& states) const;

    void collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const override;
    [[nodiscard]] int z_dim() const { return z_dim_; }

private:
    int z_dim_ = 0;
    Eigen::VectorXd scale_;
    nn::Linear embed_;
    nn::Embedding position_;
    nn::DecoderStack stack_;
    nn::Linear head_;
};

/// Causal transformer over interleaved (z_t, s_t, a_t) tokens; the action for
/// step t is read at the s_t token.
class GdtModel : public nn::Module {
public:
    GdtModel() = default;
    GdtModel(int state_dim, const GdtConfig& cfg, Eigen::VectorXd state_scale, nn::Rng& rng);

    /// z: (B K) x dz, states: (B K) x ds, actions: (B K) x 2 (normalized),
    /// timesteps: B K entries, valid: B K flags (0 = left padding).
    /// Returns (B K) x 2 predicted normalized actions in (-1, 1).
    [[nodiscard]] nn::Tensor forward(const nn::Tensor& z, const nn::Matrix& states, const nn::Matrix& actions,
                                     const std::vector<int>& timesteps, const std::vector<std::uint8_t>& valid,
                                     Eigen::Index batch) const;

    void collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const override;

private:
    int context_ = 0;
    int max_timestep_ = 0;
    Eigen::VectorXd scale_;
    nn::Linear embed_z_, embed_s_, embed_a_;
    nn::Embedding timestep_;
    nn::DecoderStack stack_;
    nn::Linear head_;
};

/// Training windows: K steps of one agent ending at `end`, left padded, plus the
/// encoder's span of that agent's states.
struct GdtBatch {
    Eigen::Index batch = 0;
    nn::Matrix states;    // (B K) x ds
    nn::Matrix actions;   // (B K) x 2, normalized
    std::vector<int> timesteps;
    std::vector<std::uint8_t> valid;
    nn::Matrix him_states;  // (B span) x ds
    std::vector<int> him_length;
    /// Row of `him_states` (within its sequence) holding the state of each window step; -1 for padding.
    std::vector<int> him_row;
};

/// One agent's trajectories from an episode: states (T x ds) and normalized actions (T x 2).
struct AgentTrajectory {
    nn::Matrix states;
    nn::Matrix actions;
};

std::vector<AgentTrajectory> agent_trajectories(const std::vector<EpisodeRecord>& episodes, int agent,
                                                const AuvParams& p);

/// Window ending at `end` (may be < K - 1, giving left padding).
void append_window(const AgentTrajectory& tr, int end, const GdtConfig& cfg, GdtBatch& out);
GdtBatch make_batch(const std::vector<AgentTrajectory>& data, const GdtConfig& cfg, nn::Rng& rng);

/// Per-agent (Phi, DT) pair with a joint optimizer.
class GdtAgent : public nn::Module {
public:
    GdtAgent() = default;
    /// Empty `state_scale` leaves inputs unscaled.
    GdtAgent(int state_dim, const GdtConfig& cfg, const Eigen::VectorXd& state_scale = {});
    GdtAgent(const GdtAgent&) = delete;
    GdtAgent& operator=(const GdtAgent&) = delete;
    GdtAgent(GdtAgent&&) = default;
    GdtAgent& operator=(GdtAgent&&) = default;

    /// Mean squared action error over valid window steps, as a graph.
    [[nodiscard]] nn::Tensor loss(const GdtBatch& b) const;
    /// One Adam step on both networks; returns the loss.
    double train_step(const GdtBatch& b);
    [[nodiscard]] double evaluate(const GdtBatch& b) const;

    /// Action for the last history step. The encoder reads the demonstration
    /// states from (t - len(history) + 1) onwards; the transformer reads the
    /// agent's own history (states T x ds, actions T x 2 with the last row ignored).
    [[nodiscard]] Eigen::Vector2d act(const AgentTrajectory& demo, const nn::Matrix& history_states,
                                      const nn::Matrix& history_actions, int t) const;

    [[nodiscard]] const HimEncoder& him() const { return him_; }
    [[nodiscard]] const GdtModel& dt() const { return dt_; }
    [[nodiscard]] const GdtConfig& config() const { return cfg_; }
    nn::Rng& rng() { return rng_; }

    void collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const override;

private:
    GdtConfig cfg_;
    nn::Rng rng_;
    HimEncoder him_;
    GdtModel dt_;
    nn::Adam opt_;
};

struct GdtCurvePoint {
    int agent = 0;
    long step = 0;
    double loss = 0.0;
};

struct GdtTrainResult {
    std::vector<GdtAgent> agents;
    std::vector<GdtCurvePoint> curve;
    /// Mean loss over the last 10% of steps per agent.
    std::vector<double> final_loss;
};

/// Independent training of one (Phi, DT) pair per agent on its own trajectories.
/// Throws ConfigError when episodes have a different agent count than `n_agents`.
GdtTrainResult train_maigdt(const std::vector<EpisodeRecord>& dataset, int n_agents, const GdtConfig& cfg,
                            int jobs = 1, const std::function<void(const GdtCurvePoint&)>& progress = {});

/// Decentralized execution conditioned on one demonstration episode.
/// Agents act sequentially in index order each step.
JointPolicy make_gdt_policy(const std::vector<GdtAgent>& agents, const EpisodeRecord& demo, const AuvParams& p);

void save_gdt(const std::filesystem::path& path, const std::vector<GdtAgent>& agents);
void load_gdt(const std::filesystem::path& path, std::vector<GdtAgent>& agents);

/// Mean squared error of predicted vs recorded actions when the agent's
/// history is the demonstration itself.
double self_consistency_mse(const GdtAgent& agent, const AgentTrajectory& demo, int stride = 1);

}  // namespace auvtrack
