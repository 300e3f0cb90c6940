#pragma once

#include "auvtrack/nn/layers.hpp"
#include "auvtrack/nn/optim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>

namespace auvtrack {

struct SacConfig {
    int obs_dim = 0;
    int act_dim = 2;
    /// Extra critic-only input (centralised critic); 0 for a local critic.
    int ctx_dim = 0;
    int hidden = 128;
    int hidden_layers = 3;
    double lr = 3e-4;
    double gamma = 0.99;
    double tau = 0.005;
    int batch = 256;
    double init_alpha = 0.2;
    /// Defaults to -act_dim when NaN.
    double target_entropy = std::numeric_limits<double>::quiet_NaN();
    double log_std_min = -5.0;
    double log_std_max = 2.0;
    /// Elementwise input scaling; empty means identity.
    Eigen::VectorXd obs_scale;
    Eigen::VectorXd ctx_scale;
    std::uint64_t seed = 0;
};

/// Minibatch; `mask` multiplies the bootstrap term (1 keeps it).
struct SacBatch {
    nn::Matrix obs;
    nn::Matrix act;
    nn::Matrix rew;
    nn::Matrix next_obs;
    nn::Matrix mask;
    nn::Matrix ctx;
    nn::Matrix next_ctx;
    /// Optional n x 1; rows set to 1 bootstrap with the zero action and no
    /// entropy bonus (the absorbing self-loop).
    nn::Matrix next_absorbing;
};

struct SacStats {
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double entropy = 0.0;  // -mean log pi
    double q_mean = 0.0;
};

/// Soft actor-critic with twin critics, target critics and a learned
/// temperature. Actions live in [-1, 1]^act_dim.
class SacAgent : public nn::Module {
public:
    SacAgent() = default;
    explicit SacAgent(SacConfig cfg);
    // Copies would share parameter nodes with the optimizers of the original.
    SacAgent(const SacAgent&) = delete;
    SacAgent& operator=(const SacAgent&) = delete;
    SacAgent(SacAgent&&) = default;
    SacAgent& operator=(SacAgent&&) = default;

    /// Deterministic mode returns tanh(mean).
    Eigen::VectorXd act(const Eigen::VectorXd& obs, bool deterministic);
    nn::Matrix act_batch(const nn::Matrix& obs, bool deterministic);
    /// tanh(mean); safe to call concurrently.
    [[nodiscard]] nn::Matrix mean_action(const nn::Matrix& obs) const;
    /// Stochastic actions and their log-probabilities, no tape.
    nn::Matrix sample(const nn::Matrix& obs, nn::Matrix* log_prob);

    /// One critic, actor and temperature step followed by the target update.
    /// Throws NumericFault on a non-finite loss.
    SacStats update(const SacBatch& b);

    [[nodiscard]] nn::Matrix q_value(const nn::Matrix& obs, const nn::Matrix& act, const nn::Matrix& ctx = {}) const;
    [[nodiscard]] double alpha() const;
    [[nodiscard]] const SacConfig& config() const { return cfg_; }
    [[nodiscard]] long updates() const { return updates_; }
    nn::Rng& rng() { return rng_; }

    void collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const override;
    /// Actor parameters only (what execution needs).
    [[nodiscard]] std::vector<nn::NamedTensor> actor_state() const { return actor_.state("actor."); }

private:
    struct Head {
        nn::Tensor mean;
        nn::Tensor log_std;
    };
    [[nodiscard]] Head policy(const nn::Matrix& obs) const;
    [[nodiscard]] nn::Tensor critic_in(const nn::Matrix& obs, const nn::Tensor& act, const nn::Matrix& ctx) const;
    [[nodiscard]] nn::Matrix scaled_obs(const nn::Matrix& obs) const;

    SacConfig cfg_;
    nn::Mlp actor_;
    nn::Mlp q1_, q2_, q1_target_, q2_target_;
    nn::Tensor log_alpha_;
    nn::Adam actor_opt_, critic_opt_, alpha_opt_;
    nn::Rng rng_;
    long updates_ = 0;
};

}  // namespace auvtrack
