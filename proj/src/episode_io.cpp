#include "auvtrack/episode_io.hpp"

#include "auvtrack/errors.hpp"

#include <fstream>

namespace auvtrack {

namespace {

nlohmann::json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json world_json(const WorldSnapshot& w) {
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& a : w.agents) agents.push_back({a.x, a.y, a.theta, a.u, a.v_sway, a.w});
    return {{"agents", agents},
            {"target", {w.target_pos.x(), w.target_pos.y(), w.target_vel.x(), w.target_vel.y()}}};
}

WorldSnapshot world_from(const nlohmann::json& j) {
    WorldSnapshot w;
    for (const auto& a : j.at("agents")) {
        const auto v = a.get<std::array<double, 6>>();
        w.agents.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
    const auto t = j.at("target").get<std::array<double, 4>>();
    w.target_pos = {t[0], t[1]};
    w.target_vel = {t[2], t[3]};
    return w;
}

}  // namespace

const Eigen::VectorXd& EpisodeRecord::obs_at(int t, int i) const {
    if (t == length()) return final_obs.at(static_cast<std::size_t>(i));
    return steps.at(static_cast<std::size_t>(t)).obs.at(static_cast<std::size_t>(i));
}

std::vector<Transition> EpisodeRecord::transitions(int t) const {
    const auto& st = steps.at(static_cast<std::size_t>(t));
    std::vector<Transition> out;
    for (int i = 0; i < n_agents; ++i) {
        Transition tr;
        tr.obs = st.obs[static_cast<std::size_t>(i)];
        tr.action = st.actions[static_cast<std::size_t>(i)];
        tr.next_obs = st.absorbing ? absorbing_observation(n_agents, n_obs_slots) : obs_at(t + 1, i);
        tr.absorbing = st.absorbing;
        tr.done = st.done;
        out.push_back(std::move(tr));
    }
    return out;
}

EpisodeRecord run_episode(MultiAuvEnv& env, std::uint64_t seed, const JointPolicy& policy, const std::string& source) {
    EpisodeRecord rec;
    auto obs = env.reset(seed);
    const auto& spec = env.spec();
    rec.scenario_id = spec.id;
    rec.task = spec.id;
    rec.source = source;
    rec.n_agents = spec.n_agents;
    rec.n_obs_slots = spec.n_obs_slots;
    rec.dt = spec.auv.dt;
    rec.target_speed = env.target_speed();
    rec.seed = seed;
    rec.hydro = spec.hydro;
    rec.reward = spec.reward;
    rec.obstacles = env.obstacles();
    rec.initial = env.world();
    while (!env.done()) {
        const auto actions = policy(env, obs);
        StepResult r = env.step(actions);
        StepRecord st;
        st.obs = std::move(obs);
        for (const auto& tr : r.transitions) st.actions.push_back(tr.action);
        st.world = env.world();
        st.absorbing = r.absorbing;
        st.done = r.done;
        rec.steps.push_back(std::move(st));
        obs.clear();
        for (const auto& tr : r.transitions) obs.push_back(tr.next_obs);
        rec.termination = to_string(r.reason);
    }
    // After an absorbing step the next observation is the absorbing encoding;
    // keep the true final observation for plotting and replay.
    rec.final_obs.clear();
    for (int i = 0; i < rec.n_agents; ++i) {
        rec.final_obs.push_back(observe(env.world(), env.obstacles(), i, spec.n_obs_slots, spec.hydro));
    }
    return rec;
}

void to_json(nlohmann::json& j, const EpisodeRecord& e) {
    nlohmann::json obs = nlohmann::json::array();
    nlohmann::json act = nlohmann::json::array();
    nlohmann::json world = nlohmann::json::array();
    std::vector<int> absorbing;
    std::vector<int> done;
    for (const auto& s : e.steps) {
        nlohmann::json o = nlohmann::json::array();
        for (const auto& v : s.obs) o.push_back(vec(v));
        obs.push_back(std::move(o));
        nlohmann::json a = nlohmann::json::array();
        for (const auto& v : s.actions) a.push_back({v(0), v(1)});
        act.push_back(std::move(a));
        world.push_back(world_json(s.world));
        absorbing.push_back(s.absorbing ? 1 : 0);
        done.push_back(s.done ? 1 : 0);
    }
    nlohmann::json fin = nlohmann::json::array();
    for (const auto& v : e.final_obs) fin.push_back(vec(v));
    j = nlohmann::json{{"meta",
                        {{"scenario_id", e.scenario_id},
                         {"source", e.source},
                         {"task", e.task},
                         {"n_agents", e.n_agents},
                         {"n_obs_slots", e.n_obs_slots},
                         {"dt", e.dt},
                         {"target_speed", e.target_speed},
                         {"seed", e.seed},
                         {"index", e.index},
                         {"termination", e.termination},
                         {"hydro", e.hydro},
                         {"reward",
                          {{"w1", e.reward.w1},
                           {"w2", e.reward.w2},
                           {"w3_total", e.reward.w3_total},
                           {"a", e.reward.a},
                           {"b", e.reward.b},
                           {"d_min_t", e.reward.d_min_t},
                           {"d_safe", e.reward.d_safe},
                           {"lambda_max_per_agent", e.reward.lambda_max_per_agent},
                           {"lambda0_per_agent", e.reward.lambda0_per_agent}}}}},
                       {"obstacles", e.obstacles},
                       {"initial", world_json(e.initial)},
                       {"obs", obs},
                       {"action", act},
                       {"world", world},
                       {"absorbing", absorbing},
                       {"done", done},
                       {"final_obs", fin}};
}

void from_json(const nlohmann::json& j, EpisodeRecord& e) {
    e = EpisodeRecord{};
    const auto& m = j.at("meta");
    e.scenario_id = m.at("scenario_id").get<std::string>();
    e.source = m.value("source", std::string{});
    e.task = m.value("task", e.scenario_id);
    e.n_agents = m.at("n_agents").get<int>();
    e.n_obs_slots = m.at("n_obs_slots").get<int>();
    e.dt = m.at("dt").get<double>();
    e.target_speed = m.value("target_speed", 0.0);
    e.seed = m.value("seed", std::uint64_t{0});
    e.index = m.value("index", 0);
    e.termination = m.value("termination", std::string("running"));
    e.hydro = m.at("hydro").get<HydroParams>();
    const auto& r = m.at("reward");
    e.reward.w1 = r.at("w1");
    e.reward.w2 = r.at("w2");
    e.reward.w3_total = r.at("w3_total");
    e.reward.a = r.at("a");
    e.reward.b = r.at("b");
    e.reward.d_min_t = r.at("d_min_t");
    e.reward.d_safe = r.at("d_safe");
    e.reward.lambda_max_per_agent = r.at("lambda_max_per_agent");
    e.reward.lambda0_per_agent = r.at("lambda0_per_agent");
    e.obstacles = j.at("obstacles").get<std::vector<Obstacle>>();
    e.initial = world_from(j.at("initial"));
    const auto& obs = j.at("obs");
    const auto& act = j.at("action");
    const auto& world = j.at("world");
    const auto& absorbing = j.at("absorbing");
    const auto& done = j.at("done");
    for (std::size_t t = 0; t < obs.size(); ++t) {
        StepRecord s;
        for (const auto& o : obs[t]) s.obs.push_back(vec_from(o));
        for (const auto& a : act[t]) s.actions.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
        s.world = world_from(world[t]);
        s.absorbing = absorbing[t].get<int>() != 0;
        s.done = done[t].get<int>() != 0;
        e.steps.push_back(std::move(s));
    }
    for (const auto& o : j.at("final_obs")) e.final_obs.push_back(vec_from(o));
}

void write_episodes(const std::filesystem::path& path, const std::vector<EpisodeRecord>& episodes) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    for (const auto& e : episodes) {
        os << nlohmann::json(e).dump() << '\n';
    }
}

std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::vector<EpisodeRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(nlohmann::json::parse(line).get<EpisodeRecord>());
    }
    return out;
}

void validate_layout(const EpisodeRecord& e) {
    const int dim = observation_dim(e.n_agents, e.n_obs_slots);
    WorldSnapshot prev = e.initial;
    for (int t = 0; t < e.length(); ++t) {
        const auto& st = e.steps[static_cast<std::size_t>(t)];
        if (static_cast<int>(st.obs.size()) != e.n_agents || static_cast<int>(st.actions.size()) != e.n_agents) {
            throw ConfigError("episode " + std::to_string(e.index) + " step " + std::to_string(t) +
                              ": agent count mismatch");
        }
        for (int i = 0; i < e.n_agents; ++i) {
            const auto& o = st.obs[static_cast<std::size_t>(i)];
            if (o.size() != dim) {
                throw ConfigError("episode " + std::to_string(e.index) + ": observation length " +
                                  std::to_string(o.size()) + " != " + std::to_string(dim));
            }
            const Eigen::VectorXd ref = observe(prev, e.obstacles, i, e.n_obs_slots, e.hydro);
            if ((ref - o).cwiseAbs().maxCoeff() > 1e-9) {
                throw ConfigError("episode " + std::to_string(e.index) + " step " + std::to_string(t) +
                                  ": observation does not match the recorded world");
            }
        }
        prev = st.world;
    }
}

}  // namespace auvtrack
