#include "auvtrack/madac.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/nn/checkpoint.hpp"
#include "auvtrack/seeding.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace auvtrack {

using nn::Matrix;
using nn::Tensor;

Eigen::Vector2d normalize_action(const Action& a, const AuvParams& p) {
    return {2.0 * a.x() / p.v_max - 1.0, a.y() / p.w_max};
}

Action denormalize_action(const Eigen::VectorXd& a, const AuvParams& p) {
    const double a0 = std::clamp(a(0), -1.0, 1.0);
    const double a1 = std::clamp(a(1), -1.0, 1.0);
    return {0.5 * (a0 + 1.0) * p.v_max, a1 * p.w_max};
}

Eigen::VectorXd observation_scale(int n_agents, int n_obs_slots) {
    Eigen::VectorXd s(observation_dim(n_agents, n_obs_slots));
    Eigen::Index k = 0;
    for (int b = 0; b < n_agents; ++b) {
        s(k++) = 1.0 / 12.0;
        s(k++) = 1.0 / 12.0;
        s(k++) = 1.0 / 1.5;
        s(k++) = 1.0 / 1.5;
    }
    for (int o = 0; o < 2 * n_obs_slots; ++o) s(k++) = 1.0 / 20.0;
    s(k) = 1.0;
    return s;
}

// ---------------------------------------------------------------- replay

JointReplay::JointReplay(int n_agents, int obs_dim, long capacity)
    : n_agents_(n_agents), obs_dim_(obs_dim), capacity_(capacity) {
    if (n_agents < 1 || obs_dim < 1 || capacity < 1) throw ConfigError("replay: sizes must be positive");
    obs_.resize(static_cast<std::size_t>(n_agents));
    act_.resize(static_cast<std::size_t>(n_agents));
    next_obs_.resize(static_cast<std::size_t>(n_agents));
}

long JointReplay::add(const std::vector<Eigen::VectorXd>& obs, const std::vector<Eigen::Vector2d>& act,
                      const std::vector<Eigen::VectorXd>& next_obs, bool next_absorbing) {
    if (static_cast<int>(obs.size()) != n_agents_ || static_cast<int>(act.size()) != n_agents_ ||
        static_cast<int>(next_obs.size()) != n_agents_) {
        throw std::invalid_argument("replay: agent count mismatch");
    }
    const long slot = head_;
    const bool append = size_ < capacity_;
    for (int i = 0; i < n_agents_; ++i) {
        if (obs[i].size() != obs_dim_ || next_obs[i].size() != obs_dim_) {
            throw std::invalid_argument("replay: observation size mismatch");
        }
        auto put = [&](std::vector<double>& dst, const double* src, int dim) {
            if (append) {
                dst.insert(dst.end(), src, src + dim);
            } else {
                std::memcpy(dst.data() + slot * dim, src, sizeof(double) * static_cast<std::size_t>(dim));
            }
        };
        put(obs_[i], obs[i].data(), obs_dim_);
        put(act_[i], act[i].data(), 2);
        put(next_obs_[i], next_obs[i].data(), obs_dim_);
    }
    if (append) {
        next_absorbing_.push_back(next_absorbing ? 1 : 0);
        ++size_;
    } else {
        next_absorbing_[static_cast<std::size_t>(slot)] = next_absorbing ? 1 : 0;
    }
    head_ = (head_ + 1) % capacity_;
    return slot;
}

std::vector<long> JointReplay::sample_index(int batch, nn::Rng& rng) const {
    if (size_ == 0) throw std::logic_error("replay: sampling from an empty buffer");
    std::uniform_int_distribution<long> pick(0, size_ - 1);
    std::vector<long> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) i = pick(rng);
    return idx;
}

JointBatch JointReplay::gather(const std::vector<long>& index) const {
    const auto b = static_cast<Eigen::Index>(index.size());
    JointBatch out;
    out.next_absorbing.resize(b, 1);
    for (int i = 0; i < n_agents_; ++i) {
        Matrix o(b, obs_dim_), a(b, 2), no(b, obs_dim_);
        for (Eigen::Index r = 0; r < b; ++r) {
            const long s = index[static_cast<std::size_t>(r)];
            std::memcpy(o.row(r).data(), obs_[i].data() + s * obs_dim_, sizeof(double) * obs_dim_);
            std::memcpy(a.row(r).data(), act_[i].data() + s * 2, sizeof(double) * 2);
            std::memcpy(no.row(r).data(), next_obs_[i].data() + s * obs_dim_, sizeof(double) * obs_dim_);
        }
        out.obs.push_back(std::move(o));
        out.act.push_back(std::move(a));
        out.next_obs.push_back(std::move(no));
    }
    for (Eigen::Index r = 0; r < b; ++r) {
        out.next_absorbing(r, 0) = next_absorbing_[static_cast<std::size_t>(index[static_cast<std::size_t>(r)])];
    }
    return out;
}

JointReplay replay_from_episodes(const std::vector<EpisodeRecord>& episodes, const AuvParams& p) {
    if (episodes.empty()) throw std::invalid_argument("replay_from_episodes: no episodes");
    const int n = episodes.front().n_agents;
    const int dim = observation_dim(n, episodes.front().n_obs_slots);
    long total = 0;
    for (const auto& e : episodes) {
        if (e.n_agents != n || observation_dim(e.n_agents, e.n_obs_slots) != dim) {
            throw std::invalid_argument("replay_from_episodes: mixed layouts");
        }
        total += e.length() + 1;
    }
    JointReplay r(n, dim, std::max(1L, total));
    const Eigen::VectorXd abs_obs = absorbing_observation(n, episodes.front().n_obs_slots);
    for (const auto& e : episodes) {
        for (int t = 0; t < e.length(); ++t) {
            const auto& st = e.steps[static_cast<std::size_t>(t)];
            std::vector<Eigen::VectorXd> next;
            std::vector<Eigen::Vector2d> act;
            for (int i = 0; i < n; ++i) {
                next.push_back(st.absorbing ? abs_obs : e.obs_at(t + 1, i));
                act.push_back(normalize_action(st.actions[static_cast<std::size_t>(i)], p));
            }
            r.add(st.obs, act, next, st.absorbing);
            if (st.absorbing) {
                std::vector<Eigen::VectorXd> a(static_cast<std::size_t>(n), abs_obs);
                r.add(a, std::vector<Eigen::Vector2d>(static_cast<std::size_t>(n), Eigen::Vector2d::Zero()), a, true);
            }
        }
    }
    return r;
}

Matrix joint_input(const JointBatch& b) {
    const int n = static_cast<int>(b.obs.size());
    const Eigen::Index rows = b.obs.front().rows();
    const Eigen::Index w = b.obs.front().cols() + 2;
    Matrix x(rows, w * n);
    for (int i = 0; i < n; ++i) {
        x.middleCols(i * w, w - 2) = b.obs[i];
        x.middleCols(i * w + w - 2, 2) = b.act[i];
    }
    return x;
}

Matrix agent_input(const JointBatch& b, int i) {
    Matrix x(b.obs[i].rows(), b.obs[i].cols() + 2);
    x << b.obs[i], b.act[i];
    return x;
}

// ---------------------------------------------------------------- discriminator

Discriminator::Discriminator(int input_dim, const DiscriminatorConfig& cfg, Eigen::VectorXd input_scale,
                             std::uint64_t seed)
    : cfg_(cfg), scale_(std::move(input_scale)), rng_(seed) {
    if (scale_.size() != 0 && scale_.size() != input_dim) throw ConfigError("discriminator: scale size mismatch");
    std::vector<Eigen::Index> sizes{input_dim};
    for (int l = 0; l < cfg_.hidden_layers; ++l) sizes.push_back(cfg_.hidden);
    sizes.push_back(1);
    mlp_ = nn::Mlp(sizes, rng_, nn::Activation::kRelu, cfg_.spectral);
    for (auto& layer : mlp_.layers()) {
        if (layer.spectral()) layer.power_iterate(20);
    }
    nn::AdamConfig ac;
    ac.lr = cfg_.lr;
    opt_ = nn::Adam(mlp_.named_parameters("d."), ac);
}

Matrix Discriminator::scaled(const Matrix& x) const {
    if (scale_.size() == 0) return x;
    return x * scale_.asDiagonal();
}

Tensor Discriminator::logit(const Matrix& x) const {
    return nn::clamp(mlp_.forward(Tensor::constant(scaled(x))), -kLogitClamp, kLogitClamp);
}

Matrix Discriminator::probability(const Matrix& x) const {
    nn::NoGradGuard ng;
    return logit(x).value().unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
}

Matrix Discriminator::reward(const Matrix& x) const {
    nn::NoGradGuard ng;
    return logit(x).value();
}

DiscriminatorStats Discriminator::loss_terms(const Matrix& x_policy, const Matrix& x_expert, const Matrix& eps,
                                             Tensor* total) const {
    if (x_policy.rows() != x_expert.rows() || x_policy.cols() != x_expert.cols()) {
        throw std::invalid_argument("discriminator: batch shapes differ");
    }
    Tensor fe = logit(x_expert);
    Tensor fp = logit(x_policy);
    // Positive class gets -log D, negative class -log(1 - D) = -log sigmoid(-f).
    const Tensor& pos = cfg_.literal_sign ? fp : fe;
    const Tensor& neg = cfg_.literal_sign ? fe : fp;
    Tensor bce = nn::add(nn::neg(nn::mean(nn::log_sigmoid(pos))), nn::neg(nn::mean(nn::log_sigmoid(nn::neg(neg)))));
    Tensor gp = nn::gradient_penalty_at(mlp_, scaled(x_policy), scaled(x_expert), eps, cfg_.gp_coeff);
    Tensor loss = nn::add(bce, gp);

    DiscriminatorStats st;
    st.bce = bce.item();
    st.gp = gp.item();
    st.loss = loss.item();
    auto sig = [](const Matrix& m) { return m.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); }).mean(); };
    st.d_expert = sig(fe.value());
    st.d_policy = sig(fp.value());
    if (total != nullptr) *total = loss;
    return st;
}

DiscriminatorStats Discriminator::update(const Matrix& x_policy, const Matrix& x_expert) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Matrix eps(x_policy.rows(), 1);
    for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, 0) = u01(rng_);
    Tensor loss;
    DiscriminatorStats st = loss_terms(x_policy, x_expert, eps, &loss);
    if (!std::isfinite(st.loss)) {
        throw NumericFault("discriminator loss is not finite (bce " + std::to_string(st.bce) + ", gp " +
                           std::to_string(st.gp) + ")");
    }
    nn::backward(loss);
    opt_.step();
    // Keep the singular-vector estimates caught up with the moved weights.
    for (auto& layer : mlp_.layers()) {
        if (!layer.spectral()) continue;
        double prev = layer.sigma_estimate();
        for (int k = 0; k < kMaxPowerIterations; ++k) {
            layer.power_iterate(1);
            const double now = layer.sigma_estimate();
            if (std::abs(now - prev) <= 1e-6 * std::max(now, 1e-12)) break;
            prev = now;
        }
    }
    return st;
}

DiscriminatorStats Discriminator::evaluate(const Matrix& x_policy, const Matrix& x_expert, const Matrix& eps) const {
    nn::NoGradGuard ng;
    return loss_terms(x_policy, x_expert, eps, nullptr);
}

std::vector<double> Discriminator::singular_value_estimates() const {
    nn::NoGradGuard ng;
    std::vector<double> out;
    for (const auto& layer : mlp_.layers()) {
        const Eigen::MatrixXd w = layer.effective_weight().value();
        out.push_back(Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0));
    }
    return out;
}

void Discriminator::collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const {
    mlp_.collect(out, prefix);
}

// ---------------------------------------------------------------- training

SacConfig agent_sac_config(const ScenarioSpec& spec, const MadacConfig& cfg, int agent) {
    SacConfig sc;
    sc.obs_dim = observation_dim(spec.n_agents, spec.n_obs_slots);
    sc.act_dim = 2;
    sc.hidden = cfg.hidden;
    sc.hidden_layers = cfg.hidden_layers;
    sc.lr = cfg.lr;
    sc.gamma = cfg.gamma;
    sc.tau = cfg.tau;
    sc.batch = cfg.batch;
    sc.init_alpha = cfg.init_alpha;
    sc.obs_scale = observation_scale(spec.n_agents, spec.n_obs_slots);
    if (cfg.centralized_critic && spec.n_agents > 1) {
        const int peers = spec.n_agents - 1;
        sc.ctx_dim = peers * (sc.obs_dim + 2);
        sc.ctx_scale.resize(sc.ctx_dim);
        for (int j = 0; j < peers; ++j) {
            sc.ctx_scale.segment(j * (sc.obs_dim + 2), sc.obs_dim) = sc.obs_scale;
            sc.ctx_scale.segment(j * (sc.obs_dim + 2) + sc.obs_dim, 2).setOnes();
        }
    }
    sc.seed = derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(agent)});
    return sc;
}

namespace {

Eigen::VectorXd joint_scale(const ScenarioSpec& spec, int agents) {
    const Eigen::VectorXd os = observation_scale(spec.n_agents, spec.n_obs_slots);
    const Eigen::Index w = os.size() + 2;
    Eigen::VectorXd s(w * agents);
    for (int i = 0; i < agents; ++i) {
        s.segment(i * w, os.size()) = os;
        s.segment(i * w + os.size(), 2).setOnes();
    }
    return s;
}

// Critic context of agent i: the other agents' observations and actions.
Matrix peer_context(const std::vector<Matrix>& obs, const std::vector<Matrix>& act, int i) {
    const int n = static_cast<int>(obs.size());
    const Eigen::Index rows = obs.front().rows();
    const Eigen::Index w = obs.front().cols() + 2;
    Matrix ctx(rows, w * (n - 1));
    int k = 0;
    for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        ctx.middleCols(k * w, w - 2) = obs[j];
        ctx.middleCols(k * w + w - 2, 2) = act[j];
        ++k;
    }
    return ctx;
}

struct EpisodeAccumulator {
    double reward_sum = 0.0;  // agent-mean total reward summed over steps
    int length = 0;
    double d_loss = 0.0;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    double alpha = 0.0;
    int d_updates = 0;
    int rl_updates = 0;

    void reset() { *this = EpisodeAccumulator{}; }
};

}  // namespace

MadacResult train_madac(const ScenarioSpec& spec, const std::vector<EpisodeRecord>& expert, const MadacConfig& cfg,
                        const RewardCalibration* calibration, const TrainProgress& progress) {
    const bool use_disc = cfg.reward_source == RewardSource::kDiscriminator;
    if (use_disc && expert.empty()) throw ConfigError("train_madac: expert buffer is empty");
    if (cfg.batch < 1 || cfg.env_steps < 1 || cfg.update_every < 1) throw ConfigError("train_madac: bad budget");
    for (const auto& e : expert) {
        if (e.n_agents != spec.n_agents) throw ConfigError("train_madac: expert agent count differs from scenario");
    }
    const int n = spec.n_agents;
    const int dim = observation_dim(n, spec.n_obs_slots);
    const AuvParams& auv = spec.auv;

    MadacResult res;
    for (int i = 0; i < n; ++i) res.agents.emplace_back(agent_sac_config(spec, cfg, i));
    JointReplay expert_replay;
    if (use_disc) {
        expert_replay = replay_from_episodes(expert, auv);
        if (cfg.decentralized) {
            for (int i = 0; i < n; ++i) {
                res.discriminators.emplace_back(dim + 2, cfg.disc, joint_scale(spec, 1),
                                                derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(i)}));
            }
        } else {
            res.discriminators.emplace_back(n * (dim + 2), cfg.disc, joint_scale(spec, n), derive_seed(cfg.seed, {2}));
        }
    }

    const long cap = std::min(cfg.replay_capacity, 2 * cfg.env_steps + 1);
    JointReplay replay(n, dim, cap);
    // Environment rewards for the reward-function baseline, slot-aligned with `replay`.
    std::vector<Matrix> env_reward;
    if (!use_disc) env_reward.assign(static_cast<std::size_t>(n), Matrix::Zero(cap, 1));

    nn::Rng batch_rng(derive_seed(cfg.seed, {3}));
    nn::Rng explore_rng(derive_seed(cfg.seed, {4}));
    std::uniform_real_distribution<double> u11(-1.0, 1.0);
    const Eigen::VectorXd abs_obs = absorbing_observation(n, spec.n_obs_slots);
    const std::vector<Eigen::VectorXd> abs_joint(static_cast<std::size_t>(n), abs_obs);
    const std::vector<Eigen::Vector2d> zero_act(static_cast<std::size_t>(n), Eigen::Vector2d::Zero());

    MultiAuvEnv env(spec);
    int episode = 0;
    auto obs = env.reset(derive_seed(cfg.seed, {100, 0}));
    EpisodeAccumulator acc;
    int below = 0;

    auto finish_episode = [&]() -> bool {
        CurveRow row;
        row.episode = episode;
        row.env_steps = res.env_steps;
        row.env_reward = acc.length > 0 ? acc.reward_sum / acc.length : 0.0;
        row.normalized_reward = std::numeric_limits<double>::quiet_NaN();
        if (calibration != nullptr) {
            const int horizon = std::max(calibration->horizon, acc.length);
            const double score =
                (acc.reward_sum + static_cast<double>(horizon - acc.length) * calibration->random_mean) / horizon;
            row.normalized_reward = normalized_score(score, *calibration);
        }
        row.d_loss = acc.d_updates > 0 ? acc.d_loss / acc.d_updates : 0.0;
        row.actor_loss = acc.rl_updates > 0 ? acc.actor_loss / acc.rl_updates : 0.0;
        row.critic_loss = acc.rl_updates > 0 ? acc.critic_loss / acc.rl_updates : 0.0;
        row.alpha = acc.rl_updates > 0 ? acc.alpha / acc.rl_updates : res.agents.front().alpha();
        row.termination = to_string(env.termination());
        res.curve.push_back(row);
        if (progress) progress(row);
        spdlog::debug("madac episode {} steps {} reward {:.3f} normalized {:.3f} d_loss {:.3f} ({})", episode,
                      res.env_steps, row.env_reward, row.normalized_reward, row.d_loss, row.termination);
        acc.reset();
        ++episode;
        if (calibration != nullptr && res.env_steps > cfg.warmup_steps) {
            below = row.normalized_reward < cfg.divergence_threshold ? below + 1 : 0;
            if (below >= cfg.divergence_episodes) {
                spdlog::warn("madac: normalized reward below {} for {} episodes; aborting", cfg.divergence_threshold,
                             below);
                return false;
            }
        }
        obs = env.reset(derive_seed(cfg.seed, {100, static_cast<std::uint64_t>(episode)}));
        return true;
    };

    while (res.env_steps < cfg.env_steps) {
        // Rollout step; the stored transition has no reward.
        std::vector<Eigen::Vector2d> a(static_cast<std::size_t>(n));
        std::vector<Action> cmd;
        for (int i = 0; i < n; ++i) {
            if (res.env_steps < cfg.warmup_steps) {
                a[i] = {u11(explore_rng), u11(explore_rng)};
            } else {
                a[i] = res.agents[i].act(obs[i], false);
            }
            cmd.push_back(denormalize_action(a[i], auv));
        }
        StepResult sr = env.step(cmd);
        std::vector<Eigen::VectorXd> next;
        for (const auto& tr : sr.transitions) next.push_back(tr.next_obs);
        if (use_disc) {
            replay.add(obs, a, sr.absorbing ? abs_joint : next, sr.absorbing);
            if (sr.absorbing) replay.add(abs_joint, zero_act, abs_joint, true);
        } else {
            const long slot = replay.add(obs, a, next, sr.absorbing);
            for (int i = 0; i < n; ++i) env_reward[i](slot, 0) = sr.rewards[i].total;
        }
        double mean_r = 0.0;
        for (const auto& r : sr.rewards) mean_r += r.total;
        acc.reward_sum += mean_r / n;
        acc.length += 1;
        obs = std::move(next);
        ++res.env_steps;

        if (res.env_steps >= cfg.warmup_steps && res.env_steps % cfg.update_every == 0) {
            // Discriminator step.
            if (use_disc) {
                const JointBatch pb = replay.sample(cfg.batch, batch_rng);
                const JointBatch eb = expert_replay.sample(cfg.batch, batch_rng);
                double dl = 0.0;
                if (cfg.decentralized) {
                    for (int i = 0; i < n; ++i) {
                        dl += res.discriminators[i].update(agent_input(pb, i), agent_input(eb, i)).loss;
                    }
                    dl /= n;
                } else {
                    dl = res.discriminators.front().update(joint_input(pb), joint_input(eb)).loss;
                }
                acc.d_loss += dl;
                acc.d_updates += 1;
            }

            // Relabel a fresh batch and step every agent on it.
            const std::vector<long> idx = replay.sample_index(cfg.batch, batch_rng);
            const JointBatch b = replay.gather(idx);
            std::vector<Matrix> rew(static_cast<std::size_t>(n));
            if (use_disc) {
                rew = relabel_rewards(res.discriminators, b);
            } else {
                for (int i = 0; i < n; ++i) {
                    rew[i].resize(cfg.batch, 1);
                    for (int r = 0; r < cfg.batch; ++r) rew[i](r, 0) = env_reward[i](idx[r], 0);
                }
            }
            std::vector<Matrix> next_act;
            if (cfg.centralized_critic && n > 1) {
                for (int i = 0; i < n; ++i) next_act.push_back(res.agents[i].sample(b.next_obs[i], nullptr));
            }
            for (int i = 0; i < n; ++i) {
                SacBatch sb;
                sb.obs = b.obs[i];
                sb.act = b.act[i];
                sb.rew = rew[i];
                sb.next_obs = b.next_obs[i];
                if (use_disc) {
                    // Termination is modelled by the absorbing self-loop, so always bootstrap.
                    sb.mask = Matrix::Ones(cfg.batch, 1);
                    sb.next_absorbing = b.next_absorbing;
                } else {
                    sb.mask = (1.0 - b.next_absorbing.array()).matrix();
                }
                if (cfg.centralized_critic && n > 1) {
                    sb.ctx = peer_context(b.obs, b.act, i);
                    sb.next_ctx = peer_context(b.next_obs, next_act, i);
                }
                const SacStats st = res.agents[i].update(sb);
                acc.actor_loss += st.actor_loss / n;
                acc.critic_loss += st.critic_loss / n;
                acc.alpha += st.alpha / n;
            }
            acc.rl_updates += 1;
        }

        if (env.done()) {
            if (!finish_episode()) {
                res.aborted = true;
                break;
            }
        }
    }
    return res;
}

std::vector<Matrix> relabel_rewards(const std::vector<Discriminator>& discriminators, const JointBatch& b) {
    const int n = static_cast<int>(b.obs.size());
    std::vector<Matrix> rew(static_cast<std::size_t>(n));
    if (discriminators.size() == 1) {
        const Matrix shared = discriminators.front().reward(joint_input(b));
        for (int i = 0; i < n; ++i) rew[i] = shared;
    } else {
        for (int i = 0; i < n; ++i) rew[i] = discriminators[i].reward(agent_input(b, i));
    }
    return rew;
}

JointPolicy make_joint_policy(const std::vector<SacAgent>& agents, const AuvParams& p) {
    const std::vector<SacAgent>* ag = &agents;
    return [ag, p](const MultiAuvEnv&, const std::vector<Eigen::VectorXd>& obs) {
        std::vector<Action> out;
        for (std::size_t i = 0; i < obs.size(); ++i) {
            const Matrix m = (*ag)[i].mean_action(obs[i].transpose());
            out.push_back(denormalize_action(m.row(0).transpose(), p));
        }
        return out;
    };
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& curve) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "episode,env_reward,normalized_reward,d_loss,actor_loss,env_steps,critic_loss,alpha,termination\n";
    os.precision(10);
    for (const auto& r : curve) {
        os << r.episode << ',' << r.env_reward << ',' << r.normalized_reward << ',' << r.d_loss << ',' << r.actor_loss
           << ',' << r.env_steps << ',' << r.critic_loss << ',' << r.alpha << ',' << r.termination << '\n';
    }
}

namespace {

std::vector<nn::NamedTensor> agents_state(const std::vector<SacAgent>& agents) {
    std::vector<nn::NamedTensor> all;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        agents[i].collect(all, "agent" + std::to_string(i) + ".");
    }
    return all;
}

}  // namespace

void save_agents(const std::filesystem::path& path, const std::vector<SacAgent>& agents) {
    nn::save_checkpoint(path, agents_state(agents));
}

void load_agents(const std::filesystem::path& path, std::vector<SacAgent>& agents) {
    nn::load_checkpoint(path, agents_state(agents));
}

std::vector<EpisodeRecord> export_offline(const JointPolicy& policy, const std::vector<ScenarioSpec>& specs,
                                          int episodes_per_scenario, std::uint64_t seed) {
    std::vector<EpisodeRecord> out;
    for (std::size_t s = 0; s < specs.size(); ++s) {
        auto eps = rollout(specs[s], policy, episodes_per_scenario, derive_seed(seed, {s}), "madac");
        for (auto& e : eps) out.push_back(std::move(e));
    }
    return out;
}

}  // namespace auvtrack
