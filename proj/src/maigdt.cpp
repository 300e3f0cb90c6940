#include "auvtrack/maigdt.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/madac.hpp"
#include "auvtrack/nn/checkpoint.hpp"
#include "auvtrack/seeding.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <thread>

namespace auvtrack {

using nn::Matrix;
using nn::Tensor;

namespace {

nn::DecoderBlockCfg block_cfg(const GdtConfig& cfg) {
    nn::DecoderBlockCfg b;
    b.embed_dim = cfg.embed;
    b.n_heads = 1;
    b.mlp_hidden = cfg.mlp_hidden;
    b.causal = true;
    b.scale_logits = false;
    return b;
}

Matrix scale_cols(const Matrix& m, const Eigen::VectorXd& s) {
    if (s.size() == 0) return m;
    return m * s.asDiagonal();
}

}  // namespace

// ---------------------------------------------------------------- encoder

HimEncoder::HimEncoder(int state_dim, const GdtConfig& cfg, Eigen::VectorXd state_scale, nn::Rng& rng)
    : z_dim_(cfg.z_dim),
      scale_(std::move(state_scale)),
      embed_(state_dim, cfg.embed, rng),
      position_(std::max(cfg.him_span(), cfg.max_timestep), cfg.embed, rng),
      stack_(block_cfg(cfg), cfg.blocks, rng),
      head_(cfg.embed, cfg.z_dim, rng) {}

Tensor HimEncoder::forward(const Matrix& states, Eigen::Index batch, Eigen::Index seq,
                           const std::vector<int>& length) const {
    if (states.rows() != batch * seq || static_cast<Eigen::Index>(length.size()) != batch) {
        throw std::invalid_argument("him encoder: shape mismatch");
    }
    if (seq > position_.count()) throw std::invalid_argument("him encoder: sequence longer than position table");
    // Reverse the real rows of each sequence; padding stays at the tail.
    Matrix rev = Matrix::Zero(states.rows(), states.cols());
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(states.rows()), 0);
    std::vector<Eigen::Index> pos(static_cast<std::size_t>(states.rows()));
    std::vector<Eigen::Index> back(static_cast<std::size_t>(states.rows()));
    for (Eigen::Index b = 0; b < batch; ++b) {
        const int len = length[static_cast<std::size_t>(b)];
        if (len < 1 || len > seq) throw std::invalid_argument("him encoder: bad sequence length");
        for (Eigen::Index k = 0; k < seq; ++k) {
            const Eigen::Index r = b * seq + k;
            pos[static_cast<std::size_t>(r)] = k;
            if (k < len) {
                rev.row(r) = states.row(b * seq + (len - 1 - k));
                valid[static_cast<std::size_t>(r)] = 1;
                back[static_cast<std::size_t>(r)] = b * seq + (len - 1 - k);
            } else {
                back[static_cast<std::size_t>(r)] = r;
            }
        }
    }
    Tensor h = nn::add(embed_.forward(Tensor::constant(scale_cols(rev, scale_))), position_.forward(pos));
    h = stack_.forward(h, batch, seq, valid);
    Tensor z = head_.forward(h);
    // Reversal is its own inverse on the real rows.
    return nn::gather_rows(z, back);
}

Matrix HimEncoder::encode(const Matrix& states) const {
    nn::NoGradGuard ng;
    return forward(states, 1, states.rows(), {static_cast<int>(states.rows())}).value();
}

void HimEncoder::collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const {
    embed_.collect(out, prefix + "embed.");
    position_.collect(out, prefix + "pos.");
    stack_.collect(out, prefix + "stack.");
    head_.collect(out, prefix + "head.");
}

// ---------------------------------------------------------------- decision transformer

GdtModel::GdtModel(int state_dim, const GdtConfig& cfg, Eigen::VectorXd state_scale, nn::Rng& rng)
    : context_(cfg.context),
      max_timestep_(cfg.max_timestep),
      scale_(std::move(state_scale)),
      embed_z_(cfg.z_dim, cfg.embed, rng),
      embed_s_(state_dim, cfg.embed, rng),
      embed_a_(2, cfg.embed, rng),
      timestep_(cfg.max_timestep, cfg.embed, rng),
      stack_(block_cfg(cfg), cfg.blocks, rng),
      head_(cfg.embed, 2, rng) {}

Tensor GdtModel::forward(const Tensor& z, const Matrix& states, const Matrix& actions,
                         const std::vector<int>& timesteps, const std::vector<std::uint8_t>& valid,
                         Eigen::Index batch) const {
    const Eigen::Index k = context_;
    const Eigen::Index bk = batch * k;
    if (z.rows() != bk || states.rows() != bk || actions.rows() != bk ||
        static_cast<Eigen::Index>(timesteps.size()) != bk || static_cast<Eigen::Index>(valid.size()) != bk) {
        throw std::invalid_argument("gdt: shape mismatch");
    }
    Tensor ez = embed_z_.forward(z);
    Tensor es = embed_s_.forward(Tensor::constant(scale_cols(states, scale_)));
    Tensor ea = embed_a_.forward(Tensor::constant(actions));
    std::vector<Eigen::Index> ts(static_cast<std::size_t>(bk));
    for (Eigen::Index r = 0; r < bk; ++r) {
        ts[static_cast<std::size_t>(r)] = std::clamp<Eigen::Index>(timesteps[static_cast<std::size_t>(r)], 0, max_timestep_ - 1);
    }
    Tensor te = timestep_.forward(ts);
    Tensor all = nn::concat_rows({nn::add(ez, te), nn::add(es, te), nn::add(ea, te)});

    // Interleave (z_t, s_t, a_t) per sequence.
    const Eigen::Index seq = 3 * k;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(batch * seq));
    std::vector<std::uint8_t> token_valid(order.size());
    std::vector<Eigen::Index> s_rows(static_cast<std::size_t>(bk));
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index t = 0; t < k; ++t) {
            for (Eigen::Index m = 0; m < 3; ++m) {
                const auto r = static_cast<std::size_t>(b * seq + 3 * t + m);
                order[r] = m * bk + b * k + t;
                token_valid[r] = valid[static_cast<std::size_t>(b * k + t)];
            }
            s_rows[static_cast<std::size_t>(b * k + t)] = b * seq + 3 * t + 1;
        }
    }
    Tensor h = nn::gather_rows(all, order);
    h = stack_.forward(h, batch, seq, token_valid);
    return nn::tanh(head_.forward(nn::gather_rows(h, s_rows)));
}

void GdtModel::collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const {
    embed_z_.collect(out, prefix + "embed_z.");
    embed_s_.collect(out, prefix + "embed_s.");
    embed_a_.collect(out, prefix + "embed_a.");
    timestep_.collect(out, prefix + "timestep.");
    stack_.collect(out, prefix + "stack.");
    head_.collect(out, prefix + "head.");
}

// ---------------------------------------------------------------- data

std::vector<AgentTrajectory> agent_trajectories(const std::vector<EpisodeRecord>& episodes, int agent,
                                                const AuvParams& p) {
    std::vector<AgentTrajectory> out;
    for (const auto& e : episodes) {
        if (agent < 0 || agent >= e.n_agents) throw ConfigError("agent index outside the episode's agent count");
        if (e.length() == 0) continue;
        AgentTrajectory tr;
        const int dim = observation_dim(e.n_agents, e.n_obs_slots);
        tr.states.resize(e.length(), dim);
        tr.actions.resize(e.length(), 2);
        for (int t = 0; t < e.length(); ++t) {
            const auto& st = e.steps[static_cast<std::size_t>(t)];
            tr.states.row(t) = st.obs[static_cast<std::size_t>(agent)].transpose();
            tr.actions.row(t) = normalize_action(st.actions[static_cast<std::size_t>(agent)], p).transpose();
        }
        out.push_back(std::move(tr));
    }
    return out;
}

void append_window(const AgentTrajectory& tr, int end, const GdtConfig& cfg, GdtBatch& out) {
    const int k = cfg.context;
    const int span = cfg.him_span();
    const int len = static_cast<int>(tr.states.rows());
    const int ds = static_cast<int>(tr.states.cols());
    if (end < 0 || end >= len) throw std::invalid_argument("append_window: end outside trajectory");
    const Eigen::Index b = out.batch;
    out.states.conservativeResize((b + 1) * k, ds);
    out.actions.conservativeResize((b + 1) * k, 2);
    out.him_states.conservativeResize((b + 1) * span, ds);

    const int first = end - k + 1;
    const int lo = std::max(0, first);
    const int hi = std::min(len - 1, first + span - 1);
    for (int j = 0; j < k; ++j) {
        const int t = first + j;
        const Eigen::Index r = b * k + j;
        if (t >= 0) {
            out.states.row(r) = tr.states.row(t);
            out.actions.row(r) = tr.actions.row(t);
            out.timesteps.push_back(t);
            out.valid.push_back(1);
            out.him_row.push_back(t - lo);
        } else {
            out.states.row(r).setZero();
            out.actions.row(r).setZero();
            out.timesteps.push_back(0);
            out.valid.push_back(0);
            out.him_row.push_back(-1);
        }
    }
    for (int i = 0; i < span; ++i) {
        const int t = lo + i;
        if (t <= hi) {
            out.him_states.row(b * span + i) = tr.states.row(t);
        } else {
            out.him_states.row(b * span + i).setZero();
        }
    }
    out.him_length.push_back(hi - lo + 1);
    out.batch = b + 1;
}

GdtBatch make_batch(const std::vector<AgentTrajectory>& data, const GdtConfig& cfg, nn::Rng& rng) {
    if (data.empty()) throw std::invalid_argument("make_batch: no trajectories");
    GdtBatch out;
    std::uniform_int_distribution<std::size_t> pick_ep(0, data.size() - 1);
    for (int i = 0; i < cfg.batch; ++i) {
        const auto& tr = data[pick_ep(rng)];
        std::uniform_int_distribution<int> pick_end(0, static_cast<int>(tr.states.rows()) - 1);
        append_window(tr, pick_end(rng), cfg, out);
    }
    return out;
}

// ---------------------------------------------------------------- agent

GdtAgent::GdtAgent(int state_dim, const GdtConfig& cfg, const Eigen::VectorXd& state_scale)
    : cfg_(cfg), rng_(cfg.seed) {
    if (state_dim < 1 || cfg.context < 1 || cfg.z_dim < 1) throw ConfigError("gdt: sizes must be positive");
    if (state_scale.size() != 0 && state_scale.size() != state_dim) throw ConfigError("gdt: scale size mismatch");
    const Eigen::VectorXd& scale = state_scale;
    him_ = HimEncoder(state_dim, cfg_, scale, rng_);
    dt_ = GdtModel(state_dim, cfg_, scale, rng_);
    nn::AdamConfig ac;
    ac.lr = cfg_.lr;
    ac.clip_norm = cfg_.clip_norm;
    auto params = him_.named_parameters("him.");
    auto dtp = dt_.named_parameters("dt.");
    params.insert(params.end(), dtp.begin(), dtp.end());
    opt_ = nn::Adam(params, ac);
}

Tensor GdtAgent::loss(const GdtBatch& b) const {
    const int k = cfg_.context;
    const int span = cfg_.him_span();
    Tensor z_all = him_.forward(b.him_states, b.batch, span, b.him_length);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(b.batch * k));
    Matrix mask(b.batch * k, 1);
    double n_valid = 0.0;
    for (Eigen::Index i = 0; i < b.batch; ++i) {
        for (int j = 0; j < k; ++j) {
            const auto r = static_cast<std::size_t>(i * k + j);
            const int hr = b.him_row[r];
            rows[r] = i * span + std::max(0, hr);
            mask(static_cast<Eigen::Index>(r), 0) = b.valid[r] ? 1.0 : 0.0;
            n_valid += b.valid[r] ? 1.0 : 0.0;
        }
    }
    Tensor z = nn::gather_rows(z_all, rows);
    Tensor pred = dt_.forward(z, b.states, b.actions, b.timesteps, b.valid, b.batch);
    Tensor err = nn::mul_col(nn::square(nn::sub(pred, Tensor::constant(b.actions))), Tensor::constant(mask));
    return nn::scale(nn::sum(err), 1.0 / std::max(1.0, 2.0 * n_valid));
}

double GdtAgent::train_step(const GdtBatch& b) {
    Tensor l = loss(b);
    const double v = l.item();
    if (!std::isfinite(v)) throw NumericFault("gdt loss is not finite");
    nn::backward(l);
    opt_.step();
    return v;
}

double GdtAgent::evaluate(const GdtBatch& b) const {
    nn::NoGradGuard ng;
    return loss(b).item();
}

Eigen::Vector2d GdtAgent::act(const AgentTrajectory& demo, const Matrix& history_states,
                              const Matrix& history_actions, int t) const {
    const int k = cfg_.context;
    const int span = cfg_.him_span();
    const int demo_len = static_cast<int>(demo.states.rows());
    if (demo_len < 1) throw std::invalid_argument("gdt act: empty demonstration");
    const int hist = static_cast<int>(std::min<Eigen::Index>(history_states.rows(), k));
    if (hist < 1) throw std::invalid_argument("gdt act: empty history");
    const Eigen::Index h0 = history_states.rows() - hist;
    const int ds = static_cast<int>(history_states.cols());

    GdtBatch b;
    b.batch = 1;
    b.states = Matrix::Zero(k, ds);
    b.actions = Matrix::Zero(k, 2);
    const int pad = k - hist;
    for (int j = 0; j < k; ++j) {
        if (j < pad) {
            b.timesteps.push_back(0);
            b.valid.push_back(0);
            continue;
        }
        const int i = j - pad;
        b.states.row(j) = history_states.row(h0 + i);
        if (h0 + i < history_actions.rows() && i + 1 < hist) b.actions.row(j) = history_actions.row(h0 + i);
        b.timesteps.push_back(t - (hist - 1 - i));
        b.valid.push_back(1);
    }

    // Encoder span over the demonstration, truncated at its end.
    const int first = t - k + 1;
    int lo = std::max(0, first);
    int hi = std::min(demo_len - 1, first + span - 1);
    if (lo > demo_len - 1) lo = hi = demo_len - 1;
    b.him_states = Matrix::Zero(span, ds);
    for (int i = 0; i + lo <= hi; ++i) b.him_states.row(i) = demo.states.row(lo + i);
    b.him_length.push_back(hi - lo + 1);
    const int last = hi - lo;

    nn::NoGradGuard ng;
    Tensor z_all = him_.forward(b.him_states, 1, span, b.him_length);
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
        const int tj = b.valid[static_cast<std::size_t>(j)] ? b.timesteps[static_cast<std::size_t>(j)] : lo;
        rows[static_cast<std::size_t>(j)] = std::clamp(tj - lo, 0, last);
    }
    Tensor z = nn::gather_rows(z_all, rows);
    const Matrix pred = dt_.forward(z, b.states, b.actions, b.timesteps, b.valid, 1).value();
    Eigen::Vector2d a = pred.row(k - 1).transpose();
    return a.cwiseMax(-1.0).cwiseMin(1.0);
}

void GdtAgent::collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const {
    him_.collect(out, prefix + "him.");
    dt_.collect(out, prefix + "dt.");
}

// ---------------------------------------------------------------- training

GdtTrainResult train_maigdt(const std::vector<EpisodeRecord>& dataset, int n_agents, const GdtConfig& cfg, int jobs,
                            const std::function<void(const GdtCurvePoint&)>& progress) {
    if (dataset.empty()) throw ConfigError("train_maigdt: empty dataset");
    for (const auto& e : dataset) {
        if (e.n_agents != n_agents) throw ConfigError("train_maigdt: dataset agent count does not match");
    }
    const int dim = observation_dim(n_agents, dataset.front().n_obs_slots);
    AuvParams p;  // action normalization uses the nominal limits
    GdtTrainResult res;
    std::vector<std::vector<GdtCurvePoint>> curves(static_cast<std::size_t>(n_agents));
    res.final_loss.assign(static_cast<std::size_t>(n_agents), 0.0);
    for (int i = 0; i < n_agents; ++i) {
        GdtConfig c = cfg;
        c.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(i)});
        res.agents.emplace_back(dim, c, observation_scale(n_agents, dataset.front().n_obs_slots));
    }

    auto train_one = [&](int i) {
        const auto data = agent_trajectories(dataset, i, p);
        GdtAgent& ag = res.agents[static_cast<std::size_t>(i)];
        nn::Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(i), 1}));
        const long tail = std::max(1L, cfg.steps / 10);
        double tail_sum = 0.0;
        for (long s = 0; s < cfg.steps; ++s) {
            const GdtBatch b = make_batch(data, ag.config(), rng);
            const double l = ag.train_step(b);
            curves[static_cast<std::size_t>(i)].push_back({i, s, l});
            if (s >= cfg.steps - tail) tail_sum += l;
        }
        res.final_loss[static_cast<std::size_t>(i)] = tail_sum / static_cast<double>(std::min(tail, cfg.steps));
    };

    const int workers = std::clamp(jobs, 1, n_agents);
    if (workers == 1) {
        for (int i = 0; i < n_agents; ++i) train_one(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int i = next++; i < n_agents; i = next++) train_one(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& c : curves) {
        for (const auto& pt : c) {
            res.curve.push_back(pt);
            if (progress) progress(pt);
        }
    }
    return res;
}

JointPolicy make_gdt_policy(const std::vector<GdtAgent>& agents, const EpisodeRecord& demo, const AuvParams& p) {
    struct State {
        std::vector<AgentTrajectory> demo;
        std::vector<Matrix> hist_s;
        std::vector<Matrix> hist_a;
        int last_t = -1;
    };
    auto st = std::make_shared<State>();
    for (int i = 0; i < static_cast<int>(agents.size()); ++i) {
        auto tr = agent_trajectories({demo}, i, p);
        if (tr.empty()) throw ConfigError("make_gdt_policy: demonstration has no steps");
        st->demo.push_back(std::move(tr.front()));
    }
    st->hist_s.resize(agents.size());
    st->hist_a.resize(agents.size());
    const std::vector<GdtAgent>* ag = &agents;
    return [ag, st, p](const MultiAuvEnv& env, const std::vector<Eigen::VectorXd>& obs) {
        const int t = env.t();
        const std::size_t n = ag->size();
        if (t <= st->last_t || t == 0) {
            for (std::size_t i = 0; i < n; ++i) {
                st->hist_s[i].resize(0, obs[i].size());
                st->hist_a[i].resize(0, 2);
            }
        }
        st->last_t = t;
        const int k = (*ag)[0].config().context;
        std::vector<Action> out;
        for (std::size_t i = 0; i < n; ++i) {
            Matrix& hs = st->hist_s[i];
            Matrix& ha = st->hist_a[i];
            if (hs.rows() >= k) {
                // Keep the last K - 1 rows before appending.
                hs = Matrix(hs.bottomRows(k - 1));
                ha = Matrix(ha.bottomRows(k - 1));
            }
            hs.conservativeResize(hs.rows() + 1, obs[i].size());
            hs.row(hs.rows() - 1) = obs[i].transpose();
            ha.conservativeResize(ha.rows() + 1, 2);
            ha.row(ha.rows() - 1).setZero();
            const Eigen::Vector2d a = (*ag)[i].act(st->demo[i], hs, ha, t);
            ha.row(ha.rows() - 1) = a.transpose();
            out.push_back(denormalize_action(a, p));
        }
        return out;
    };
}

namespace {

std::vector<nn::NamedTensor> gdt_state(const std::vector<GdtAgent>& agents) {
    std::vector<nn::NamedTensor> all;
    for (std::size_t i = 0; i < agents.size(); ++i) agents[i].collect(all, "agent" + std::to_string(i) + ".");
    return all;
}

}  // namespace

void save_gdt(const std::filesystem::path& path, const std::vector<GdtAgent>& agents) {
    nn::save_checkpoint(path, gdt_state(agents));
}

void load_gdt(const std::filesystem::path& path, std::vector<GdtAgent>& agents) {
    nn::load_checkpoint(path, gdt_state(agents));
}

double self_consistency_mse(const GdtAgent& agent, const AgentTrajectory& demo, int stride) {
    const int k = agent.config().context;
    const int len = static_cast<int>(demo.states.rows());
    double acc = 0.0;
    int count = 0;
    for (int t = 0; t < len; t += std::max(1, stride)) {
        const int h0 = std::max(0, t - k + 1);
        const Matrix hs = demo.states.middleRows(h0, t - h0 + 1);
        const Matrix ha = demo.actions.middleRows(h0, t - h0 + 1);
        const Eigen::Vector2d a = agent.act(demo, hs, ha, t);
        acc += (a - demo.actions.row(t).transpose()).squaredNorm() / 2.0;
        ++count;
    }
    return count > 0 ? acc / count : 0.0;
}

}  // namespace auvtrack
