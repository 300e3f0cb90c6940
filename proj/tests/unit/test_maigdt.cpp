#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/eval.hpp"
#include "auvtrack/madac.hpp"
#include "auvtrack/maigdt.hpp"
#include "auvtrack/nn/checkpoint.hpp"
#include "auvtrack/nn/distributions.hpp"

#include <algorithm>
#include <cmath>

using namespace auvtrack;
using nn::Matrix;

namespace {

GdtConfig tiny(int context = 4) {
    GdtConfig c;
    c.context = context;
    c.z_dim = 4;
    c.embed = 16;
    c.blocks = 2;
    c.mlp_hidden = 16;
    c.max_timestep = 256;
    c.batch = 8;
    c.lr = 1e-3;
    return c;
}

AgentTrajectory random_trajectory(int len, int ds, nn::Rng& rng) {
    AgentTrajectory tr;
    tr.states = nn::randn(len, ds, rng);
    tr.actions = nn::randn(len, 2, rng).array().tanh();
    return tr;
}

/// z rows aligned with the window rows of `b`, as the loss builds them.
nn::Tensor window_z(const GdtAgent& ag, const GdtBatch& b) {
    const int k = ag.config().context, span = ag.config().him_span();
    nn::Tensor z_all = ag.him().forward(b.him_states, b.batch, span, b.him_length);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < b.batch; ++i)
        for (int j = 0; j < k; ++j) rows.push_back(i * span + std::max(0, b.him_row[static_cast<std::size_t>(i * k + j)]));
    return nn::gather_rows(z_all, rows);
}

Matrix predict(const GdtAgent& ag, const GdtBatch& b) {
    nn::NoGradGuard ng;
    return ag.dt().forward(window_z(ag, b), b.states, b.actions, b.timesteps, b.valid, b.batch).value();
}

// 1-D toy task: s' = s + 0.2 a0, drifting up or down depending on the style.
AgentTrajectory toy_episode(double direction, int len, nn::Rng& rng) {
    std::normal_distribution<double> noise(0.0, 0.1);
    AgentTrajectory tr;
    tr.states.resize(len, 1);
    tr.actions.resize(len, 2);
    double s = 0.0;
    for (int t = 0; t < len; ++t) {
        tr.states(t, 0) = s;
        const double a = std::clamp(0.8 * direction + noise(rng), -1.0, 1.0);
        tr.actions(t, 0) = a;
        tr.actions(t, 1) = 0.0;
        s += 0.2 * a;
    }
    return tr;
}

std::vector<double> histogram(const Matrix& states, double lo, double hi, int bins) {
    std::vector<double> h(static_cast<std::size_t>(bins), 1e-3);
    for (Eigen::Index t = 0; t < states.rows(); ++t) {
        const int b = std::clamp(static_cast<int>((states(t, 0) - lo) / (hi - lo) * bins), 0, bins - 1);
        h[static_cast<std::size_t>(b)] += 1.0;
    }
    double total = 0.0;
    for (double v : h) total += v;
    for (double& v : h) v /= total;
    return h;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

}  // namespace

TEST_SUITE("maigdt") {

TEST_CASE("encoder is anti-causal and handles a single state") {
    nn::Rng rng(1);
    const GdtConfig cfg = tiny();
    GdtAgent ag(3, cfg);
    const Matrix s = nn::randn(7, 3, rng);
    const Matrix z = ag.him().encode(s);
    REQUIRE(z.rows() == 7);
    REQUIRE(z.cols() == cfg.z_dim);
    for (int j = 0; j < 7; ++j) {
        Matrix p = s;
        p.row(j).array() += 1.5;
        const Matrix zp = ag.him().encode(p);
        // Rows after j never see s_j; rows up to j do.
        if (j + 1 < 7) CHECK((zp.bottomRows(6 - j) - z.bottomRows(6 - j)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((zp.topRows(j + 1) - z.topRows(j + 1)).cwiseAbs().minCoeff() >= 0.0);
        CHECK((zp.row(j) - z.row(j)).cwiseAbs().maxCoeff() > 1e-9);
    }
    const Matrix one = ag.him().encode(s.topRows(1));
    CHECK(one.rows() == 1);
    CHECK(one.allFinite());
    CHECK((one - ag.him().encode(s.topRows(1))).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transformer is causal in states and actions") {
    nn::Rng rng(2);
    const GdtConfig cfg = tiny(6);
    GdtAgent ag(3, cfg);
    const AgentTrajectory tr = random_trajectory(10, 3, rng);
    GdtBatch b;
    append_window(tr, 8, cfg, b);
    const Matrix base = predict(ag, b);
    for (int j = 0; j < cfg.context; ++j) {
        GdtBatch ps = b;
        ps.states.row(j).array() += 1.0;
        const Matrix p1 = predict(ag, ps);
        if (j > 0) CHECK((p1.topRows(j) - base.topRows(j)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((p1.row(j) - base.row(j)).cwiseAbs().maxCoeff() > 1e-9);

        GdtBatch pa = b;
        pa.actions.row(j).array() += 0.5;
        const Matrix p2 = predict(ag, pa);
        // The action token follows its state token, so its own prediction is unaffected.
        CHECK((p2.topRows(j + 1) - base.topRows(j + 1)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("loss: identity, padding mask, encoder gradient") {
    nn::Rng rng(3);
    const GdtConfig cfg = tiny(5);
    GdtAgent ag(2, cfg);
    const AgentTrajectory tr = random_trajectory(12, 2, rng);

    // Replace recorded actions by the model's own predictions one row at a
    // time; causality makes the result self-consistent, so the loss is 0.
    GdtBatch b;
    append_window(tr, 9, cfg, b);
    for (int j = 0; j < cfg.context; ++j) b.actions.row(j) = predict(ag, b).row(j);
    CHECK(ag.evaluate(b) < 1e-28);

    GdtBatch padded;
    append_window(tr, 1, cfg, padded);
    CHECK(std::count(padded.valid.begin(), padded.valid.end(), 0) == 3);
    CHECK(padded.him_row[0] == -1);
    CHECK(padded.him_length[0] == 2 + cfg.context - 1);
    const double l0 = ag.evaluate(padded);
    GdtBatch garbage = padded;
    garbage.actions.topRows(3).setConstant(0.9);
    garbage.states.topRows(3).setConstant(7.0);
    CHECK(ag.evaluate(garbage) == l0);

    GdtBatch rb = make_batch({tr}, cfg, rng);
    nn::Tensor l = ag.loss(rb);
    nn::backward(l);
    double him_grad = 0.0;
    for (const auto& p : ag.him().parameters())
        if (p.has_grad()) him_grad += p.grad().squaredNorm();
    CHECK(him_grad > 0.0);
}

TEST_CASE("training lowers the loss and self-consistency tracks it") {
    nn::Rng rng(4);
    GdtConfig cfg = tiny(5);
    std::vector<AgentTrajectory> data;
    for (int e = 0; e < 20; ++e) data.push_back(toy_episode(e % 2 == 0 ? 1.0 : -1.0, 25, rng));
    std::vector<double> drops;
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        cfg.seed = seed;
        GdtAgent ag(1, cfg);
        nn::Rng brng(seed);
        const GdtBatch probe = make_batch(data, GdtConfig{cfg}, brng);
        const double before = ag.evaluate(probe);
        for (int s = 0; s < 200; ++s) ag.train_step(make_batch(data, cfg, brng));
        drops.push_back(before - ag.evaluate(probe));
    }
    std::sort(drops.begin(), drops.end());
    CHECK(drops[1] > 0.0);
}

TEST_CASE("demonstration style steers the toy rollout") {
    nn::Rng rng(5);
    GdtConfig cfg = tiny(5);
    cfg.batch = 16;
    std::vector<AgentTrajectory> data;
    for (int e = 0; e < 20; ++e) data.push_back(toy_episode(e % 2 == 0 ? 1.0 : -1.0, 25, rng));
    const AgentTrajectory up = toy_episode(1.0, 25, rng), down = toy_episode(-1.0, 25, rng);
    std::vector<double> margins;
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        cfg.seed = seed;
        GdtAgent ag(1, cfg);
        nn::Rng brng(seed);
        for (int s = 0; s < 400; ++s) ag.train_step(make_batch(data, cfg, brng));
        auto roll = [&](const AgentTrajectory& demo) {
            Matrix hs(0, 1), ha(0, 2), visited(25, 1);
            double s = 0.0;
            for (int t = 0; t < 25; ++t) {
                visited(t, 0) = s;
                hs.conservativeResize(hs.rows() + 1, 1);
                hs(hs.rows() - 1, 0) = s;
                ha.conservativeResize(ha.rows() + 1, 2);
                ha.row(ha.rows() - 1).setZero();
                const Eigen::Vector2d a = ag.act(demo, hs, ha, t);
                CHECK(a == ag.act(demo, hs, ha, t));
                ha.row(ha.rows() - 1) = a.transpose();
                s += 0.2 * a(0);
            }
            return visited;
        };
        const auto hu = histogram(up.states, -5, 5, 20), hd = histogram(down.states, -5, 5, 20);
        const auto ru = histogram(roll(up), -5, 5, 20), rd = histogram(roll(down), -5, 5, 20);
        margins.push_back(std::min(kl(ru, hd) - kl(ru, hu), kl(rd, hu) - kl(rd, hd)));
    }
    std::sort(margins.begin(), margins.end());
    CHECK(margins[1] > 0.0);
}

TEST_CASE("multi-agent training: independent models, agent mismatch, determinism, checkpoints") {
    ScenarioSpec spec = make_scenario("1", 2, 0);
    spec.duration_steps = 30;
    const auto eps = rollout(spec, random_policy(6), 3, 7, "madac");
    GdtConfig cfg = tiny(4);
    cfg.steps = 5;
    cfg.seed = 8;
    const GdtTrainResult a = train_maigdt(eps, 2, cfg);
    const GdtTrainResult b = train_maigdt(eps, 2, cfg, 2);
    REQUIRE(a.agents.size() == 2);
    CHECK(a.curve.size() == 10);
    CHECK(nn::checkpoint_bytes(a.agents[0].state()) != nn::checkpoint_bytes(a.agents[1].state()));
    for (int i = 0; i < 2; ++i) CHECK(nn::checkpoint_bytes(a.agents[i].state()) == nn::checkpoint_bytes(b.agents[i].state()));
    // No parameter node is shared between the two agents.
    for (const auto& p : a.agents[0].parameters())
        for (const auto& q : a.agents[1].parameters()) CHECK(p.node() != q.node());
    CHECK_THROWS_AS(train_maigdt(eps, 3, cfg), ConfigError);

    const auto path = std::filesystem::temp_directory_path() / "auvtrack_gdt_test.ckpt";
    save_gdt(path, a.agents);
    std::vector<GdtAgent> loaded;
    const int dim = observation_dim(2, 3);
    for (int i = 0; i < 2; ++i) loaded.emplace_back(dim, cfg, observation_scale(2, 3));
    load_gdt(path, loaded);
    for (int i = 0; i < 2; ++i) CHECK(nn::checkpoint_bytes(loaded[i].state()) == nn::checkpoint_bytes(a.agents[i].state()));
    std::filesystem::remove(path);

    const JointPolicy pol = make_gdt_policy(a.agents, eps.front(), spec.auv);
    MultiAuvEnv e1(spec), e2(spec);
    const EpisodeRecord r1 = run_episode(e1, 3, pol, "maigdt");
    const EpisodeRecord r2 = run_episode(e2, 3, pol, "maigdt");
    CHECK(nlohmann::json(r1).dump() == nlohmann::json(r2).dump());
    CHECK(std::isfinite(self_consistency_mse(a.agents[0], agent_trajectories(eps, 0, spec.auv).front())));
}

}
