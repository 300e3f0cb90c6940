#include "auvtrack/eval.hpp"

#include "auvtrack/errors.hpp"
#include "auvtrack/seeding.hpp"
#include "auvtrack/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace auvtrack {

namespace {

struct Accum {
    double sum_d = 0.0, sumsq_d = 0.0, sum_l = 0.0, sumsq_l = 0.0;
    double min_obs = std::numeric_limits<double>::infinity();
    double danger = 0.0;
    long steps = 0;
    int episodes = 0, lost = 0, collisions = 0;

    void add(const EpisodeRecord& e) {
        ++episodes;
        if (e.termination == to_string(Termination::kTargetLost)) ++lost;
        if (e.termination == to_string(Termination::kObstacleCollision) ||
            e.termination == to_string(Termination::kAgentCollision)) {
            ++collisions;
        }
        for (int t = 0; t < e.length(); ++t) {
            const StepMetrics m = step_metrics(e, t);
            min_obs = std::min(min_obs, m.min_obstacle_distance);
            sum_d += m.min_distance;
            sumsq_d += m.min_distance * m.min_distance;
            sum_l += m.consistency;
            sumsq_l += m.consistency * m.consistency;
            if (m.danger) danger += e.dt;
            ++steps;
        }
    }

    [[nodiscard]] MetricsSummary summary() const {
        MetricsSummary m;
        const double n = std::max<double>(static_cast<double>(steps), 1.0);
        m.mean_min_distance = sum_d / n;
        m.std_min_distance = std::sqrt(std::max(0.0, sumsq_d / n - m.mean_min_distance * m.mean_min_distance));
        m.mean_consistency = sum_l / n;
        m.std_consistency = std::sqrt(std::max(0.0, sumsq_l / n - m.mean_consistency * m.mean_consistency));
        m.min_obstacle_distance = min_obs;
        m.danger_time = danger;
        m.episodes = episodes;
        m.steps = steps;
        m.target_lost = lost;
        m.collisions = collisions;
        return m;
    }
};

std::string fmt(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

StepMetrics step_metrics(const EpisodeRecord& e, int t) {
    const auto& w = e.steps.at(static_cast<std::size_t>(t)).world;
    StepMetrics m;
    m.min_distance = std::numeric_limits<double>::infinity();
    m.min_obstacle_distance = std::numeric_limits<double>::infinity();
    std::vector<Eigen::Vector2d> pos;
    for (const auto& a : w.agents) {
        pos.push_back(a.position());
        m.min_distance = std::min(m.min_distance, (a.position() - w.target_pos).norm());
        for (const auto& o : e.obstacles) {
            const double d = surface_distance(a.position(), o);
            m.min_obstacle_distance = std::min(m.min_obstacle_distance, std::max(d, 0.0));
            if (d < e.reward.d_safe) m.danger = true;
        }
    }
    m.consistency = pos.size() >= 2 ? swarm_consistency(pos, e.hydro) : 0.0;
    return m;
}

MetricsReport compute_metrics(const std::vector<EpisodeRecord>& episodes) {
    if (episodes.empty()) throw std::invalid_argument("compute_metrics: no episodes");
    const int n = episodes.front().n_agents;
    Accum all;
    std::map<std::string, Accum> groups;
    for (const auto& e : episodes) {
        if (e.n_agents != n) throw std::invalid_argument("compute_metrics: mixed agent counts");
        all.add(e);
        groups[e.source].add(e);
    }
    MetricsReport r;
    r.overall = all.summary();
    for (const auto& [k, a] : groups) r.per_source[k] = a.summary();
    return r;
}

std::string metrics_csv_header() {
    return "mean_min_distance,std_min_distance,mean_consistency,std_consistency,min_obstacle_distance,danger_time,"
           "episodes";
}

std::string metrics_csv_row(const MetricsSummary& m) {
    std::ostringstream os;
    os << fmt(m.mean_min_distance) << ',' << fmt(m.std_min_distance) << ',' << fmt(m.mean_consistency) << ','
       << fmt(m.std_consistency) << ',' << fmt(m.min_obstacle_distance) << ',' << fmt(m.danger_time) << ','
       << m.episodes;
    return os.str();
}

void to_json(nlohmann::json& j, const MetricsSummary& m) {
    j = nlohmann::json{{"mean_min_distance", m.mean_min_distance},
                       {"std_min_distance", m.std_min_distance},
                       {"mean_consistency", m.mean_consistency},
                       {"std_consistency", m.std_consistency},
                       {"danger_time", m.danger_time},
                       {"episodes", m.episodes},
                       {"steps", m.steps},
                       {"target_lost", m.target_lost},
                       {"collisions", m.collisions}};
    if (std::isinf(m.min_obstacle_distance)) {
        j["min_obstacle_distance"] = "inf";
    } else {
        j["min_obstacle_distance"] = m.min_obstacle_distance;
    }
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"overall", r.overall}};
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [k, m] : r.per_source) groups[k] = m;
    j["per_source"] = groups;
}

double mean_step_reward(const EpisodeRecord& e) {
    if (e.steps.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& st : e.steps) {
        const auto rs = compute_rewards(st.world, e.obstacles, e.reward, e.hydro);
        double s = 0.0;
        for (const auto& r : rs) s += r.total;
        acc += s / static_cast<double>(rs.size());
    }
    return acc / static_cast<double>(e.steps.size());
}

double episode_score(const EpisodeRecord& e, const RewardCalibration& c) {
    const int len = e.length();
    const int horizon = std::max(c.horizon, len);
    if (horizon == 0) return c.random_mean;
    const double got = mean_step_reward(e) * len;
    return (got + static_cast<double>(horizon - len) * c.random_mean) / horizon;
}

JointPolicy random_policy(std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed);
    return [rng](const MultiAuvEnv& env, const std::vector<Eigen::VectorXd>&) {
        const auto& p = env.spec().auv;
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::vector<Action> a;
        for (int i = 0; i < env.n_agents(); ++i) {
            const double v = u01(*rng) * p.v_max;
            const double w = (2.0 * u01(*rng) - 1.0) * p.w_max;
            a.emplace_back(v, w);
        }
        return a;
    };
}

std::vector<EpisodeRecord> rollout(const ScenarioSpec& spec, const JointPolicy& policy, int episodes,
                                   std::uint64_t seed, const std::string& source) {
    std::vector<EpisodeRecord> out;
    MultiAuvEnv env(spec);
    for (int k = 0; k < episodes; ++k) {
        EpisodeRecord e = run_episode(env, derive_seed(seed, {static_cast<std::uint64_t>(k)}), policy, source);
        e.index = k;
        e.task = spec.id;
        out.push_back(std::move(e));
    }
    return out;
}

RewardCalibration calibrate(const ScenarioSpec& spec, const std::vector<EpisodeRecord>& expert, std::uint64_t seed,
                            int random_episodes) {
    if (expert.empty()) throw std::invalid_argument("calibrate: empty expert buffer");
    RewardCalibration c;
    c.horizon = spec.duration_steps;
    const auto rnd = rollout(spec, random_policy(derive_seed(seed, {1})), random_episodes, derive_seed(seed, {2}),
                             "random");
    // Pooled over steps: the fixed point of the fill rule, so these
    // episodes score exactly random_mean on average.
    double acc = 0.0;
    long steps = 0;
    for (const auto& e : rnd) {
        acc += mean_step_reward(e) * e.length();
        steps += e.length();
    }
    c.random_mean = steps > 0 ? acc / static_cast<double>(steps) : 0.0;
    // Expert episodes run the full horizon, so their score is their mean.
    double ex = 0.0;
    for (const auto& e : expert) ex += episode_score(e, c);
    c.expert_mean = ex / static_cast<double>(expert.size());
    return c;
}

double normalized_score(double score, const RewardCalibration& c) {
    const double span = c.expert_mean - c.random_mean;
    if (!(std::abs(span) > 1e-9 * std::max({1.0, std::abs(c.expert_mean), std::abs(c.random_mean)}))) {
        throw DomainError("normalized_reward: expert and random calibrations coincide");
    }
    return (score - c.random_mean) / span;
}

double normalized_reward(const std::vector<EpisodeRecord>& episodes, const RewardCalibration& c) {
    if (episodes.empty()) throw std::invalid_argument("normalized_reward: no episodes");
    double acc = 0.0;
    for (const auto& e : episodes) acc += episode_score(e, c);
    return normalized_score(acc / static_cast<double>(episodes.size()), c);
}

// ---------------------------------------------------------------- Lemma 1

MarkovGame random_markov_game(int n_states, int a1, int a2, double gamma, std::uint64_t seed) {
    if (n_states < 1 || a1 < 1 || a2 < 1) throw std::invalid_argument("random_markov_game: empty space");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto simplex = [&](int k) {
        Eigen::VectorXd p(k);
        for (int i = 0; i < k; ++i) p(i) = -std::log(1.0 - u01(rng));  // Dirichlet(1)
        return Eigen::VectorXd(p / p.sum());
    };
    MarkovGame g;
    g.n_states = n_states;
    g.n_actions[0] = a1;
    g.n_actions[1] = a2;
    g.gamma = gamma;
    g.transition.assign(static_cast<std::size_t>(n_states), {});
    for (int s = 0; s < n_states; ++s) {
        for (int k = 0; k < a1 * a2; ++k) g.transition[static_cast<std::size_t>(s)].push_back(simplex(n_states));
    }
    for (int i = 0; i < 2; ++i) {
        for (int s = 0; s < n_states; ++s) {
            Eigen::MatrixXd r(a1, a2);
            for (int x = 0; x < a1; ++x) {
                for (int y = 0; y < a2; ++y) r(x, y) = 2.0 * u01(rng) - 1.0;
            }
            g.reward[i].push_back(r);
        }
        const int na = g.n_actions[i];
        g.policy[i].resize(n_states, na);
        for (int s = 0; s < n_states; ++s) g.policy[i].row(s) = simplex(na).transpose();
    }
    return g;
}

namespace {

// Joint probability of (a1, a2) at s.
double joint_prob(const MarkovGame& g, int s, int x, int y) { return g.policy[0](s, x) * g.policy[1](s, y); }

// q_i(s, a_i) = E_{a_-i}[ r_i + gamma sum_s' P v_i(s') ].
double q_value(const MarkovGame& g, int agent, int s, int ai, const Eigen::VectorXd& v) {
    const int other = 1 - agent;
    double q = 0.0;
    for (int b = 0; b < g.n_actions[other]; ++b) {
        const int x = agent == 0 ? ai : b;
        const int y = agent == 0 ? b : ai;
        const auto& p = g.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(x * g.n_actions[1] + y)];
        q += g.policy[other](s, b) *
             (g.reward[agent][static_cast<std::size_t>(s)](x, y) + g.gamma * p.dot(v));
    }
    return q;
}

}  // namespace

Eigen::VectorXd solve_values(const MarkovGame& g, int agent) {
    const int n = g.n_states;
    Eigen::MatrixXd ppi = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rpi = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < n; ++s) {
        for (int x = 0; x < g.n_actions[0]; ++x) {
            for (int y = 0; y < g.n_actions[1]; ++y) {
                const double pr = joint_prob(g, s, x, y);
                rpi(s) += pr * g.reward[agent][static_cast<std::size_t>(s)](x, y);
                ppi.row(s) +=
                    pr * g.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(x * g.n_actions[1] + y)]
                             .transpose();
            }
        }
    }
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - g.gamma * ppi;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw NumericFault("solve_values: singular Bellman system");
    return lu.solve(rpi);
}

double lemma1_residual(const MarkovGame& g, const Eigen::VectorXd& v0, const Eigen::VectorXd& v1) {
    const Eigen::VectorXd* v[2] = {&v0, &v1};
    double f = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int s = 0; s < g.n_states; ++s) {
            double eq = 0.0;
            for (int a = 0; a < g.n_actions[i]; ++a) eq += g.policy[i](s, a) * q_value(g, i, s, a, *v[i]);
            f += (*v[i])(s) - eq;
        }
    }
    return std::abs(f);
}

double lemma1_residual(const MarkovGame& g) { return lemma1_residual(g, solve_values(g, 0), solve_values(g, 1)); }

}  // namespace auvtrack
