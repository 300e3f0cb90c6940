#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/eval.hpp"
#include "auvtrack/madac.hpp"
#include "auvtrack/nn/checkpoint.hpp"
#include "auvtrack/nn/distributions.hpp"

#include <cmath>
#include <numbers>

using namespace auvtrack;
using nn::Matrix;

namespace {

DiscriminatorConfig small_disc() {
    DiscriminatorConfig c;
    c.hidden = 16;
    return c;
}

/// Zero the output layer so the logit is exactly `bias` everywhere.
void set_constant_logit(Discriminator& d, double bias) {
    auto& last = const_cast<nn::Mlp&>(d.mlp()).layers().back();
    last.weight().mutable_value().setZero();
    last.bias().mutable_value().setConstant(bias);
}

Matrix cloud(int rows, int cols, double centre, nn::Rng& rng) {
    return (nn::randn(rows, cols, rng) * 0.3).array() + centre;
}

ScenarioSpec short_scenario(int duration) {
    ScenarioSpec s = make_scenario("1", 2, 0);
    s.duration_steps = duration;
    return s;
}

}  // namespace

TEST_SUITE("madac") {

TEST_CASE("action normalization round trip") {
    AuvParams p;
    gen::Gen g(51);
    for (int k = 0; k < 100; ++k) {
        const Action a(g.uniform(0, p.v_max), g.uniform(-p.w_max, p.w_max));
        const Eigen::Vector2d n = normalize_action(a, p);
        CHECK(n.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
        CHECK((denormalize_action(n, p) - a).norm() < 1e-12);
    }
    CHECK(normalize_action(Action(0, -p.w_max), p) == Eigen::Vector2d(-1, -1));
}

TEST_CASE("symmetric BCE is minimal at D = 1/2") {
    nn::Rng rng(1);
    const Matrix x = nn::randn(64, 6, rng);
    const Matrix eps = Matrix::Constant(64, 1, 0.5);
    Discriminator d(6, small_disc(), {}, 2);
    // For identical batches -log s(f) - log s(-f) >= 2 log 2 at every sample.
    CHECK(d.evaluate(x, x, eps).bce >= std::log(4.0) - 1e-12);
    set_constant_logit(d, 0.0);
    const DiscriminatorStats st = d.evaluate(x, x, eps);
    CHECK(st.bce == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(st.d_expert == doctest::Approx(0.5));
    CHECK(st.d_policy == doctest::Approx(0.5));
}

TEST_CASE("reward is the clamped logit") {
    nn::Rng rng(3);
    const Matrix x = nn::randn(32, 5, rng);
    Discriminator d(5, small_disc(), {}, 4);
    const Matrix r = d.reward(x);
    const Matrix p = d.probability(x);
    for (int i = 0; i < 32; ++i) {
        CHECK(r(i, 0) == doctest::Approx(std::log(p(i, 0)) - std::log(1.0 - p(i, 0))).epsilon(1e-9));
        CHECK(p(i, 0) > 0.0);
        CHECK(p(i, 0) < 1.0);
    }
    CHECK(r == d.reward(x));

    set_constant_logit(d, std::log(9.0));
    CHECK(d.probability(x)(0, 0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(d.reward(x)(0, 0) == doctest::Approx(2.1972245773).epsilon(1e-9));
    set_constant_logit(d, 0.0);
    CHECK(d.reward(x)(5, 0) == 0.0);
    set_constant_logit(d, 500.0);
    CHECK(d.reward(x)(0, 0) == Discriminator::kLogitClamp);
    CHECK(d.probability(x)(0, 0) < 1.0);
}

TEST_CASE("separable batches: loss falls, spectral bound holds") {
    nn::Rng rng(5);
    const Matrix xp = cloud(64, 4, -2.0, rng);
    const Matrix xe = cloud(64, 4, 2.0, rng);
    const Matrix eps = Matrix::Constant(64, 1, 0.5);
    for (bool literal : {false, true}) {
        DiscriminatorConfig cfg = small_disc();
        cfg.literal_sign = literal;
        cfg.lr = 1e-3;
        Discriminator d(4, cfg, {}, 6);
        const double first = d.evaluate(xp, xe, eps).loss;
        double prev = first;
        int increases = 0;
        for (int k = 0; k < 100; ++k) {
            const DiscriminatorStats st = d.update(xp, xe);
            CHECK(st.bce >= 0.0);
            CHECK(st.gp >= 0.0);
            CHECK(st.loss >= st.gp);
            for (double s : d.singular_value_estimates()) CHECK(s <= 1.05);
            const double now = d.evaluate(xp, xe, eps).loss;
            if (now > prev) ++increases;
            prev = now;
        }
        CHECK(prev < 0.5 * first);
        CHECK(increases <= 5);
        const DiscriminatorStats end = d.evaluate(xp, xe, eps);
        if (literal) {
            CHECK(end.d_policy > end.d_expert);
        } else {
            CHECK(end.d_expert > end.d_policy);
        }
    }
}

TEST_CASE("replay keeps agents aligned and has no reward slot") {
    JointReplay r(3, 2, 5);
    for (int k = 0; k < 8; ++k) {
        std::vector<Eigen::VectorXd> o, nx;
        std::vector<Eigen::Vector2d> a;
        for (int i = 0; i < 3; ++i) {
            o.push_back(Eigen::Vector2d(k, i));
            nx.push_back(Eigen::Vector2d(k + 1, i));
            a.push_back(Eigen::Vector2d(0.1 * k, -0.1 * i));
        }
        CHECK(r.add(o, a, nx, k % 2 == 1) == k % 5);
    }
    CHECK(r.size() == 5);
    nn::Rng rng(7);
    const JointBatch b = r.sample(50, rng);
    for (int row = 0; row < 50; ++row) {
        const double k = b.obs[0](row, 0);
        CHECK(k >= 3);
        for (int i = 0; i < 3; ++i) {
            CHECK(b.obs[i](row, 0) == k);
            CHECK(b.obs[i](row, 1) == i);
            CHECK(b.next_obs[i](row, 0) == k + 1);
            CHECK(b.act[i](row, 0) == doctest::Approx(0.1 * k));
        }
        CHECK(b.next_absorbing(row, 0) == (static_cast<int>(k) % 2 == 1 ? 1.0 : 0.0));
    }
    // The reward field of recorded transitions stays empty.
    MultiAuvEnv env(short_scenario(20));
    const auto eps = rollout(env.spec(), random_policy(1), 1, 2, "random");
    for (const auto& tr : eps.front().transitions(0)) CHECK(!tr.reward.has_value());
}

TEST_CASE("expert replay adds absorbing self-loops") {
    ScenarioSpec spec = short_scenario(400);
    const auto eps = rollout(spec, random_policy(3), 3, 4, "expert");
    long expected = 0;
    for (const auto& e : eps) expected += e.length() + (e.steps.back().absorbing ? 1 : 0);
    const JointReplay r = replay_from_episodes(eps, spec.auv);
    CHECK(r.size() == expected);
}

TEST_CASE("centralized relabelling gives every agent the same reward") {
    ScenarioSpec spec = short_scenario(60);
    const auto eps = rollout(spec, random_policy(5), 2, 6, "random");
    const JointReplay r = replay_from_episodes(eps, spec.auv);
    nn::Rng rng(8);
    const JointBatch b = r.sample(40, rng);
    const int dim = static_cast<int>(joint_input(b).cols());
    std::vector<Discriminator> central;
    central.emplace_back(dim, small_disc(), Eigen::VectorXd{}, 9);
    const auto rew = relabel_rewards(central, b);
    REQUIRE(rew.size() == 2);
    CHECK(rew[0] == rew[1]);
    CHECK(rew[0] == central.front().reward(joint_input(b)));

    std::vector<Discriminator> local;
    const int adim = static_cast<int>(agent_input(b, 0).cols());
    local.emplace_back(adim, small_disc(), Eigen::VectorXd{}, 10);
    local.emplace_back(adim, small_disc(), Eigen::VectorXd{}, 11);
    const auto lr = relabel_rewards(local, b);
    CHECK(lr[0] == local[0].reward(agent_input(b, 0)));
    CHECK(lr[1] == local[1].reward(agent_input(b, 1)));
}

TEST_CASE("absorbing transitions are scored by the discriminator") {
    const int n = 2, slots = 3;
    const Eigen::VectorXd abs_obs = absorbing_observation(n, slots);
    JointReplay r(n, static_cast<int>(abs_obs.size()), 4);
    r.add({abs_obs, abs_obs}, {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()}, {abs_obs, abs_obs}, true);
    const JointBatch b = r.gather({0});
    const int dim = static_cast<int>(joint_input(b).cols());
    std::vector<Discriminator> d1, d2;
    d1.emplace_back(dim, small_disc(), Eigen::VectorXd{}, 12);
    d2.emplace_back(dim, small_disc(), Eigen::VectorXd{}, 13);
    const double r1 = relabel_rewards(d1, b)[0](0, 0);
    const double r2 = relabel_rewards(d2, b)[0](0, 0);
    {
        nn::NoGradGuard ng;
        CHECK(r1 == d1.front().logit(joint_input(b)).value()(0, 0));
    }
    CHECK(r1 != r2);
    set_constant_logit(d1.front(), 1.5);
    CHECK(relabel_rewards(d1, b)[0](0, 0) == 1.5);
}

TEST_CASE("SAC critic fits a one-step bandit") {
    SacConfig c;
    c.obs_dim = 1;
    c.hidden = 32;
    c.hidden_layers = 2;
    c.batch = 64;
    c.lr = 1e-3;
    c.seed = 14;
    SacAgent agent(c);
    const Matrix obs = Matrix::Ones(64, 1);
    for (int k = 0; k < 1500; ++k) {
        SacBatch b;
        b.obs = obs;
        b.act = agent.sample(obs, nullptr);
        b.rew = Matrix::Constant(64, 1, 1.0);
        b.next_obs = obs;
        b.mask = Matrix::Zero(64, 1);
        agent.update(b);
    }
    const Matrix a = agent.sample(obs, nullptr);
    const Matrix q = agent.q_value(obs, a);
    CHECK(std::abs(q.mean() - 1.0) < 1e-2);
    CHECK(agent.alpha() > 0.0);
}

TEST_CASE("training is deterministic, exports validate, divergence aborts") {
    ScenarioSpec spec = short_scenario(80);
    const auto expert = rollout(spec, random_policy(15), 2, 16, "expert");
    MadacConfig cfg;
    cfg.env_steps = 240;
    cfg.warmup_steps = 100;
    cfg.batch = 16;
    cfg.hidden = 16;
    cfg.disc = small_disc();
    cfg.seed = 17;
    const MadacResult a = train_madac(spec, expert, cfg);
    const MadacResult b = train_madac(spec, expert, cfg);
    REQUIRE(a.curve.size() == b.curve.size());
    CHECK(!a.curve.empty());
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].d_loss == b.curve[i].d_loss);
        CHECK(a.curve[i].actor_loss == b.curve[i].actor_loss);
        CHECK(a.curve[i].env_reward == b.curve[i].env_reward);
    }
    for (int i = 0; i < 2; ++i) CHECK(nn::checkpoint_bytes(a.agents[i].state()) == nn::checkpoint_bytes(b.agents[i].state()));
    CHECK(a.discriminators.size() == 1);
    for (double s : a.discriminators.front().singular_value_estimates()) CHECK(s <= 1.05);

    const JointPolicy pol = make_joint_policy(a.agents, spec.auv);
    ScenarioSpec other = make_scenario("4", 2, 0);
    other.duration_steps = 30;
    const auto out = export_offline(pol, {spec, other}, 3, 18);
    CHECK(out.size() == 6);
    for (const auto& e : out) {
        CHECK(e.source == "madac");
        CHECK_NOTHROW(validate_layout(e));
    }

    MadacConfig dec = cfg;
    dec.decentralized = true;
    dec.env_steps = 120;
    CHECK(train_madac(spec, expert, dec).discriminators.size() == 2);

    RewardCalibration cal{-4.0, 0.0, spec.duration_steps};
    MadacConfig div = cfg;
    div.divergence_episodes = 1;
    div.divergence_threshold = 1e9;
    div.warmup_steps = 10;
    const MadacResult ab = train_madac(spec, expert, div, &cal);
    CHECK(ab.aborted);
    CHECK(ab.env_steps < div.env_steps);
}

}
