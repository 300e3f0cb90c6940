#include "auvtrack/cli.hpp"

#include "auvtrack/baseline.hpp"
#include "auvtrack/checks.hpp"
#include "auvtrack/errors.hpp"
#include "auvtrack/eval.hpp"
#include "auvtrack/expert.hpp"
#include "auvtrack/hashing.hpp"
#include "auvtrack/madac.hpp"
#include "auvtrack/maigdt.hpp"
#include "auvtrack/scenario.hpp"
#include "auvtrack/seeding.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace auvtrack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Nested objects map to subcommand sections, arrays to repeated values.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        flatten(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void flatten(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, v] : j.items()) {
            if (v.is_object()) {
                auto p = parents;
                p.push_back(key);
                flatten(v, p, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (v.is_array()) {
                for (const auto& e : v) item.inputs.push_back(scalar(e));
            } else {
                item.inputs.push_back(scalar(v));
            }
            out.push_back(std::move(item));
        }
    }
};

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

struct Globals {
    std::uint64_t seed = 0;
    std::string out;
    int jobs = 1;
    bool resume = false;
};

/// One subcommand invocation: options, declared inputs and written outputs.
class Run {
public:
    Run(std::string command, const Globals& g, json options)
        : command_(std::move(command)), out_(g.out), seed_(g.seed), resume_(g.resume), options_(std::move(options)),
          start_(std::chrono::steady_clock::now()), started_(utc_now()) {
        options_["seed"] = seed_;
    }

    [[nodiscard]] bool has_out() const { return !out_.empty(); }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    void require_out() const {
        if (out_.empty()) throw CLI::ValidationError("--out", "required by " + command_);
    }

    void input(const fs::path& p) {
        if (!fs::is_regular_file(p)) throw ConfigError("input not found: " + p.string());
        inputs_.push_back({{"path", p.string()}, {"hash", git_blob_hash_file(p)}});
    }

    /// Registers an output and returns its path under --out.
    fs::path output(const std::string& rel) {
        outputs_.push_back(rel);
        return fs::path(out_) / rel;
    }

    [[nodiscard]] std::string config_hash() const { return git_blob_hash(options_.dump()); }

    /// With --resume: true when the existing manifest has the same command,
    /// configuration and inputs and all its outputs are intact.
    [[nodiscard]] bool up_to_date() const {
        if (!resume_ || out_.empty() || !fs::exists(fs::path(out_) / "manifest.json")) return false;
        json m;
        try {
            m = read_manifest(out_);
        } catch (const std::exception&) {
            return false;
        }
        if (m.value("command", "") != command_ || m.value("config_hash", "") != config_hash() ||
            m.value("inputs", json::array()) != json(inputs_)) {
            return false;
        }
        for (const auto& o : m.value("outputs", json::array())) {
            const fs::path p = fs::path(out_) / o.at("path").get<std::string>();
            if (!fs::is_regular_file(p) || git_blob_hash_file(p) != o.at("hash").get<std::string>()) return false;
        }
        spdlog::info("{}: outputs in {} are up to date", command_, out_);
        return true;
    }

    void write_manifest() const {
        if (out_.empty()) return;
        json outs = json::array();
        for (const auto& rel : outputs_) {
            outs.push_back({{"path", rel}, {"hash", git_blob_hash_file(fs::path(out_) / rel)}});
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json m = {{"command", command_},
                  {"version", kVersion},
                  {"seed", seed_},
                  {"options", options_},
                  {"config_hash", config_hash()},
                  {"inputs", inputs_},
                  {"outputs", outs},
                  {"wall_clock", {{"started", started_}, {"seconds", secs}}}};
        std::ofstream f(fs::path(out_) / "manifest.json");
        f << m.dump(2) << '\n';
        if (!f) throw std::runtime_error("cannot write manifest in " + out_);
    }

    void make_out_dir() const {
        if (!out_.empty()) fs::create_directories(out_);
    }

private:
    std::string command_;
    std::string out_;
    std::uint64_t seed_;
    bool resume_;
    json options_;
    std::vector<json> inputs_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
    std::string started_;
};

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

/// A scenario argument is a JSON file when one exists at that path, otherwise a built-in id.
ScenarioSpec load_scenario(const std::string& arg, int n, std::uint64_t seed, Run& run) {
    if (fs::is_regular_file(arg)) {
        run.input(arg);
        ScenarioSpec s = read_json(arg).get<ScenarioSpec>();
        s.validate();
        return s;
    }
    return make_scenario(arg, n, seed);
}

// ---------------------------------------------------------------- config serialization

json to_json_config(const MadacConfig& c) {
    return {{"env_steps", c.env_steps},
            {"warmup_steps", c.warmup_steps},
            {"update_every", c.update_every},
            {"batch", c.batch},
            {"hidden", c.hidden},
            {"hidden_layers", c.hidden_layers},
            {"lr", c.lr},
            {"gamma", c.gamma},
            {"tau", c.tau},
            {"init_alpha", c.init_alpha},
            {"disc",
             {{"hidden", c.disc.hidden},
              {"hidden_layers", c.disc.hidden_layers},
              {"spectral", c.disc.spectral},
              {"gp_coeff", c.disc.gp_coeff},
              {"lr", c.disc.lr},
              {"literal_sign", c.disc.literal_sign}}},
            {"decentralized", c.decentralized},
            {"centralized_critic", c.centralized_critic},
            {"reward_source", c.reward_source == RewardSource::kEnvironment ? "environment" : "discriminator"},
            {"replay_capacity", c.replay_capacity},
            {"divergence_episodes", c.divergence_episodes},
            {"divergence_threshold", c.divergence_threshold},
            {"seed", c.seed}};
}

MadacConfig madac_config_from_json(const json& j) {
    MadacConfig c;
    c.env_steps = j.at("env_steps");
    c.warmup_steps = j.at("warmup_steps");
    c.update_every = j.at("update_every");
    c.batch = j.at("batch");
    c.hidden = j.at("hidden");
    c.hidden_layers = j.at("hidden_layers");
    c.lr = j.at("lr");
    c.gamma = j.at("gamma");
    c.tau = j.at("tau");
    c.init_alpha = j.at("init_alpha");
    const auto& d = j.at("disc");
    c.disc.hidden = d.at("hidden");
    c.disc.hidden_layers = d.at("hidden_layers");
    c.disc.spectral = d.at("spectral");
    c.disc.gp_coeff = d.at("gp_coeff");
    c.disc.lr = d.at("lr");
    c.disc.literal_sign = d.at("literal_sign");
    c.decentralized = j.at("decentralized");
    c.centralized_critic = j.at("centralized_critic");
    c.reward_source = j.at("reward_source") == "environment" ? RewardSource::kEnvironment : RewardSource::kDiscriminator;
    c.replay_capacity = j.at("replay_capacity");
    c.divergence_episodes = j.at("divergence_episodes");
    c.divergence_threshold = j.at("divergence_threshold");
    c.seed = j.at("seed");
    return c;
}

json to_json_config(const GdtConfig& c) {
    return {{"context", c.context}, {"z_dim", c.z_dim},   {"embed", c.embed},
            {"blocks", c.blocks},   {"mlp_hidden", c.mlp_hidden}, {"max_timestep", c.max_timestep},
            {"lr", c.lr},           {"batch", c.batch},   {"steps", c.steps},
            {"clip_norm", c.clip_norm}, {"seed", c.seed}};
}

GdtConfig gdt_config_from_json(const json& j) {
    GdtConfig c;
    c.context = j.at("context");
    c.z_dim = j.at("z_dim");
    c.embed = j.at("embed");
    c.blocks = j.at("blocks");
    c.mlp_hidden = j.at("mlp_hidden");
    c.max_timestep = j.at("max_timestep");
    c.lr = j.at("lr");
    c.batch = j.at("batch");
    c.steps = j.at("steps");
    c.clip_norm = j.at("clip_norm");
    c.seed = j.at("seed");
    return c;
}

json to_json_calibration(const RewardCalibration& c) {
    return {{"random_mean", c.random_mean}, {"expert_mean", c.expert_mean}, {"horizon", c.horizon}};
}

RewardCalibration calibration_from_json(const json& j) {
    RewardCalibration c;
    c.random_mean = j.at("random_mean");
    c.expert_mean = j.at("expert_mean");
    c.horizon = j.at("horizon");
    return c;
}

/// Agents of a train-madac output directory.
struct MadacModel {
    ScenarioSpec spec;
    MadacConfig cfg;
    std::vector<SacAgent> agents;
};

MadacModel load_madac_model(const fs::path& dir, Run& run) {
    run.input(dir / "madac.json");
    run.input(dir / "agents.ckpt");
    const json j = read_json(dir / "madac.json");
    MadacModel m;
    m.spec = j.at("scenario").get<ScenarioSpec>();
    m.cfg = madac_config_from_json(j.at("config"));
    for (int i = 0; i < m.spec.n_agents; ++i) m.agents.emplace_back(agent_sac_config(m.spec, m.cfg, i));
    load_agents(dir / "agents.ckpt", m.agents);
    return m;
}

struct GdtModelDir {
    GdtConfig cfg;
    int n_agents = 0;
    int n_obs_slots = 0;
    std::vector<GdtAgent> agents;
};

GdtModelDir load_gdt_model(const fs::path& dir, Run& run) {
    run.input(dir / "gdt.json");
    run.input(dir / "gdt.ckpt");
    const json j = read_json(dir / "gdt.json");
    GdtModelDir m;
    m.cfg = gdt_config_from_json(j.at("config"));
    m.n_agents = j.at("n_agents");
    m.n_obs_slots = j.at("n_obs_slots");
    const int dim = observation_dim(m.n_agents, m.n_obs_slots);
    for (int i = 0; i < m.n_agents; ++i) {
        GdtConfig c = m.cfg;
        c.seed = derive_seed(m.cfg.seed, {static_cast<std::uint64_t>(i)});
        m.agents.emplace_back(dim, c, observation_scale(m.n_agents, m.n_obs_slots));
    }
    load_gdt(dir / "gdt.ckpt", m.agents);
    return m;
}

/// "path#index"; the index defaults to 0.
EpisodeRecord load_demo_ref(const std::string& ref, Run& run) {
    std::string path = ref;
    int idx = 0;
    if (const auto hash = ref.rfind('#'); hash != std::string::npos) {
        path = ref.substr(0, hash);
        try {
            idx = std::stoi(ref.substr(hash + 1));
        } catch (const std::exception&) {
            throw CLI::ValidationError("--demo", "bad episode index in '" + ref + "'");
        }
    }
    run.input(path);
    auto eps = read_episodes(path);
    if (idx < 0 || idx >= static_cast<int>(eps.size())) {
        throw ConfigError(fmt::format("--demo: episode {} out of range ({} episodes)", idx, eps.size()));
    }
    return std::move(eps[static_cast<std::size_t>(idx)]);
}

double mean_yaw_rate(const std::vector<EpisodeRecord>& eps) {
    double acc = 0.0;
    long count = 0;
    for (const auto& e : eps) {
        for (const auto& st : e.steps) {
            for (const auto& a : st.actions) {
                acc += a.y();
                ++count;
            }
        }
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

// ---------------------------------------------------------------- subcommands

struct ScenarioOpts {
    std::string id = "1";
    int n = 2;
    std::string validate;
};

int cmd_scenario(const ScenarioOpts& o, const Globals& g) {
    if (!o.validate.empty()) {
        Run run("scenario", g, {{"validate", o.validate}});
        run.input(o.validate);
        const ScenarioSpec s = read_json(o.validate).get<ScenarioSpec>();
        s.validate();
        std::cout << "valid scenario '" << s.id << "' with " << s.n_agents << " agents\n";
        if (run.has_out()) {
            run.make_out_dir();
            write_json(run.output("scenario.json"), s);
            run.write_manifest();
        }
        return 0;
    }
    Run run("scenario", g, {{"id", o.id}, {"n", o.n}});
    const ScenarioSpec s = make_scenario(o.id, o.n, g.seed);
    s.validate();
    const std::string text = json(s).dump(2) + "\n";
    if (!run.has_out()) {
        std::cout << text;
        return 0;
    }
    if (run.up_to_date()) return 0;
    run.make_out_dir();
    write_text(run.output("scenario.json"), text);
    run.write_manifest();
    return 0;
}

struct ExpertOpts {
    std::string scenario = "1";
    int n = 2;
    int episodes = 10;
    std::string tracker;
    long tracker_budget = TrackerTrainConfig{}.budget_steps;
};

int cmd_expert(const ExpertOpts& o, const Globals& g) {
    Run run("expert", g,
            {{"scenario", o.scenario}, {"n", o.n}, {"episodes", o.episodes}, {"tracker", o.tracker},
             {"tracker_budget", o.tracker_budget}});
    run.require_out();
    const ScenarioSpec spec = load_scenario(o.scenario, o.n, g.seed, run);
    if (!o.tracker.empty()) run.input(o.tracker);
    if (run.up_to_date()) return 0;
    run.make_out_dir();

    json report;
    std::unique_ptr<WaypointTracker> tracker;
    TrackerEval tev;
    if (!o.tracker.empty()) {
        tracker = std::make_unique<WaypointTracker>(spec.auv, tracker_sac_config(TrackerTrainConfig{}, g.seed));
        tracker->load(o.tracker);
        tev = tracker->evaluate();
    } else {
        TrackerTrainConfig tc;
        tc.budget_steps = o.tracker_budget;
        spdlog::info("expert: training waypoint tracker (budget {} steps)", tc.budget_steps);
        auto tr = train_waypoint_tracker(spec.auv, derive_seed(g.seed, {1}), tc);
        tracker = std::move(tr.tracker);
        tev = tr.eval;
        report["tracker_steps"] = tr.steps_used;
        std::ostringstream csv;
        csv << "step,episode_reward,stationary_error,moving_error\n" << std::setprecision(10);
        for (const auto& p : tr.curve) {
            csv << p.step << ',' << p.episode_reward << ',' << p.stationary_error << ',' << p.moving_error << '\n';
        }
        write_text(run.output("tracker_curve.csv"), csv.str());
        tracker->save(run.output("tracker.ckpt"));
    }
    report["tracker"] = {{"stationary_error", tev.stationary_error},
                         {"moving_error", tev.moving_error},
                         {"passed", tev.passed()}};
    if (!tev.passed()) {
        spdlog::error("expert: waypoint tracker misses the error thresholds (stationary {:.3f} m, moving {:.3f} m)",
                      tev.stationary_error, tev.moving_error);
        write_json(run.output("expert.json"), report);
        run.write_manifest();
        return 1;
    }

    CollectStats stats;
    const auto demos =
        collect_demonstrations(spec, *tracker, default_apf(spec), o.episodes, derive_seed(g.seed, {2}), g.jobs, &stats);
    write_episodes(run.output("demos.jsonl"), demos);
    report["episodes"] = demos.size();
    report["discarded"] = stats.discarded;
    report["scenario"] = spec;
    report["scenario_hash"] = git_blob_hash(json(spec).dump());
    report["metrics"] = compute_metrics(demos);
    write_json(run.output("expert.json"), report);
    run.write_manifest();
    const auto& m = report["metrics"]["overall"];
    std::cout << fmt::format("{} demonstrations, mean min-distance {:.2f} m, danger time {:.2f} s\n", demos.size(),
                             m["mean_min_distance"].get<double>(), m["danger_time"].get<double>());
    return 0;
}

struct MadacOpts {
    std::string scenario = "1";
    int n = 2;
    std::string demos;
    int demo_count = 0;
    long steps = 40000;
    long warmup = 5000;
    int batch = 256;
    int hidden = 128;
    int layers = 2;
    double lr = 3e-4;
    bool decentralized = false;
    bool literal_sign = false;
    bool no_sn = false;
    double gp = 1.0;
    int calibrate_episodes = 20;
    int eval_episodes = 10;
};

int cmd_train_madac(const MadacOpts& o, const Globals& g) {
    Run run("train-madac", g,
            {{"scenario", o.scenario}, {"n", o.n}, {"demos", o.demos}, {"demo_count", o.demo_count},
             {"steps", o.steps}, {"warmup", o.warmup}, {"batch", o.batch}, {"hidden", o.hidden},
             {"layers", o.layers}, {"lr", o.lr}, {"decentralized", o.decentralized},
             {"literal_sign", o.literal_sign}, {"no_sn", o.no_sn}, {"gp", o.gp},
             {"calibrate_episodes", o.calibrate_episodes}, {"eval_episodes", o.eval_episodes}});
    run.require_out();
    const ScenarioSpec spec = load_scenario(o.scenario, o.n, g.seed, run);
    run.input(o.demos);
    if (run.up_to_date()) return 0;
    run.make_out_dir();

    auto demos = read_episodes(o.demos);
    if (o.demo_count > 0) {
        if (o.demo_count > static_cast<int>(demos.size())) {
            throw ConfigError(fmt::format("--demo-count {} exceeds the {} demonstrations", o.demo_count, demos.size()));
        }
        demos.resize(static_cast<std::size_t>(o.demo_count));
    }
    for (const auto& d : demos) {
        if (d.n_agents != spec.n_agents) throw ConfigError("demonstrations have a different agent count");
    }

    MadacConfig cfg;
    cfg.env_steps = o.steps;
    cfg.warmup_steps = o.warmup;
    cfg.batch = o.batch;
    cfg.hidden = o.hidden;
    cfg.hidden_layers = o.layers;
    cfg.lr = o.lr;
    cfg.decentralized = o.decentralized;
    cfg.disc.literal_sign = o.literal_sign;
    cfg.disc.spectral = !o.no_sn;
    cfg.disc.gp_coeff = o.gp;
    cfg.seed = g.seed;

    const RewardCalibration cal = calibrate(spec, demos, derive_seed(g.seed, {3}), o.calibrate_episodes);
    spdlog::info("train-madac: calibration random {:.4f} expert {:.4f}", cal.random_mean, cal.expert_mean);
    const auto res = train_madac(spec, demos, cfg, &cal, [](const CurveRow& r) {
        spdlog::info("episode {} steps {} normalized {:.3f} d_loss {:.3f} ({})", r.episode, r.env_steps,
                     r.normalized_reward, r.d_loss, r.termination);
    });
    save_agents(run.output("agents.ckpt"), res.agents);
    write_curve_csv(run.output("curve.csv"), res.curve);

    const auto eval_eps = rollout(spec, make_joint_policy(res.agents, spec.auv), o.eval_episodes,
                                  derive_seed(g.seed, {4}), "madac");
    const double norm = normalized_reward(eval_eps, cal);
    json report = {{"scenario", spec},
                   {"config", to_json_config(cfg)},
                   {"demonstrations", demos.size()},
                   {"env_steps", res.env_steps},
                   {"aborted", res.aborted},
                   {"calibration", to_json_calibration(cal)},
                   {"eval", {{"episodes", o.eval_episodes}, {"normalized_reward", norm},
                             {"metrics", compute_metrics(eval_eps)}}}};
    write_json(run.output("calibration.json"), to_json_calibration(cal));
    write_json(run.output("madac.json"), report);
    run.write_manifest();
    std::cout << fmt::format("normalized reward {:.4f} over {} evaluation episodes\n", norm, o.eval_episodes);
    return res.aborted ? 1 : 0;
}

struct ExportOpts {
    std::string madac;
    std::vector<std::string> scenarios;
    int episodes = 50;
};

int cmd_export_offline(const ExportOpts& o, const Globals& g) {
    Run run("export-offline", g, {{"madac", o.madac}, {"scenarios", o.scenarios}, {"episodes", o.episodes}});
    run.require_out();
    MadacModel model = load_madac_model(o.madac, run);
    std::vector<ScenarioSpec> specs;
    for (const auto& s : o.scenarios) specs.push_back(load_scenario(s, model.spec.n_agents, g.seed, run));
    if (specs.empty()) specs.push_back(model.spec);
    for (const auto& s : specs) {
        if (s.n_agents != model.spec.n_agents || s.n_obs_slots != model.spec.n_obs_slots) {
            throw ConfigError("scenario '" + s.id + "' does not match the trained observation layout");
        }
    }
    if (run.up_to_date()) return 0;
    run.make_out_dir();
    const auto data =
        export_offline(make_joint_policy(model.agents, model.spec.auv), specs, o.episodes, derive_seed(g.seed, {6}));
    write_episodes(run.output("dataset.jsonl"), data);
    json per = json::object();
    for (const auto& e : data) per[e.scenario_id] = per.value(e.scenario_id, 0) + 1;
    write_json(run.output("dataset.json"),
               {{"episodes", data.size()}, {"per_scenario", per}, {"metrics", compute_metrics(data)}});
    run.write_manifest();
    std::cout << data.size() << " episodes exported\n";
    return 0;
}

struct GdtOpts {
    std::string dataset;
    int n = 0;
    long steps = GdtConfig{}.steps;
    int context = GdtConfig{}.context;
    int embed = GdtConfig{}.embed;
    int blocks = GdtConfig{}.blocks;
    int z_dim = GdtConfig{}.z_dim;
    int batch = GdtConfig{}.batch;
    double lr = GdtConfig{}.lr;
};

int cmd_train_maigdt(const GdtOpts& o, const Globals& g) {
    Run run("train-maigdt", g,
            {{"dataset", o.dataset}, {"n", o.n}, {"steps", o.steps}, {"context", o.context}, {"embed", o.embed},
             {"blocks", o.blocks}, {"z_dim", o.z_dim}, {"batch", o.batch}, {"lr", o.lr}});
    run.require_out();
    run.input(o.dataset);
    if (run.up_to_date()) return 0;
    run.make_out_dir();
    const auto data = read_episodes(o.dataset);
    if (data.empty()) throw ConfigError("empty dataset");
    const int n = o.n > 0 ? o.n : data.front().n_agents;
    GdtConfig cfg;
    cfg.steps = o.steps;
    cfg.context = o.context;
    cfg.embed = o.embed;
    cfg.mlp_hidden = o.embed;
    cfg.blocks = o.blocks;
    cfg.z_dim = o.z_dim;
    cfg.batch = o.batch;
    cfg.lr = o.lr;
    cfg.seed = g.seed;
    const auto res = train_maigdt(data, n, cfg, g.jobs, [&](const GdtCurvePoint& p) {
        if (p.step % 100 == 0) spdlog::info("agent {} step {} loss {:.5f}", p.agent, p.step, p.loss);
    });
    save_gdt(run.output("gdt.ckpt"), res.agents);
    std::ostringstream csv;
    csv << "agent,step,loss\n" << std::setprecision(10);
    for (const auto& p : res.curve) csv << p.agent << ',' << p.step << ',' << p.loss << '\n';
    write_text(run.output("curve.csv"), csv.str());
    write_json(run.output("gdt.json"), {{"config", to_json_config(cfg)},
                                        {"n_agents", n},
                                        {"n_obs_slots", data.front().n_obs_slots},
                                        {"dataset_episodes", data.size()},
                                        {"final_loss", res.final_loss}});
    run.write_manifest();
    for (int i = 0; i < n; ++i) {
        std::cout << fmt::format("agent {} final loss {:.5f}\n", i, res.final_loss[static_cast<std::size_t>(i)]);
    }
    return 0;
}

struct EvalOpts {
    std::string episodes;
    std::string policy;
    std::string model;
    std::string demo;
    std::string scenario;
    int n = 2;
    int rollouts = 10;
    std::string calibration;
    std::string demos;
    int calibrate_episodes = 20;
    std::string baseline;
    long steps = 40000;
    long warmup = 5000;
    int hidden = 128;
    std::string format = "json";
};

int cmd_eval(const EvalOpts& o, const Globals& g) {
    Run run("eval", g,
            {{"episodes", o.episodes}, {"policy", o.policy}, {"model", o.model}, {"demo", o.demo},
             {"scenario", o.scenario}, {"n", o.n}, {"rollouts", o.rollouts}, {"calibration", o.calibration},
             {"demos", o.demos}, {"calibrate_episodes", o.calibrate_episodes}, {"baseline", o.baseline},
             {"steps", o.steps}, {"warmup", o.warmup}, {"hidden", o.hidden}, {"format", o.format}});
    const int sources = !o.episodes.empty() + !o.policy.empty() + !o.baseline.empty();
    if (sources != 1) throw CLI::ValidationError("eval", "give exactly one of --episodes, --policy, --baseline");

    json report;
    std::vector<EpisodeRecord> eps;
    std::optional<RewardCalibration> cal;
    std::optional<ScenarioSpec> spec;
    if (!o.scenario.empty()) spec = load_scenario(o.scenario, o.n, g.seed, run);
    if (!o.calibration.empty()) {
        run.input(o.calibration);
        cal = calibration_from_json(read_json(o.calibration));
    }
    std::vector<EpisodeRecord> expert;
    if (!o.demos.empty()) {
        run.input(o.demos);
        expert = read_episodes(o.demos);
    }

    if (!o.episodes.empty()) {
        run.input(o.episodes);
        if (run.up_to_date()) return 0;
        eps = read_episodes(o.episodes);
    } else if (o.policy == "madac") {
        if (o.model.empty()) throw CLI::ValidationError("--model", "required for --policy madac");
        MadacModel m = load_madac_model(o.model, run);
        if (!spec) spec = m.spec;
        if (run.up_to_date()) return 0;
        eps = rollout(*spec, make_joint_policy(m.agents, spec->auv), o.rollouts, derive_seed(g.seed, {8}), "madac");
    } else if (o.policy == "maigdt") {
        if (o.model.empty() || o.demo.empty()) {
            throw CLI::ValidationError("--model", "--model and --demo are required for --policy maigdt");
        }
        GdtModelDir m = load_gdt_model(o.model, run);
        const EpisodeRecord demo = load_demo_ref(o.demo, run);
        if (demo.n_agents != m.n_agents) throw ConfigError("demo agent count does not match the model");
        if (!spec) spec = make_scenario(demo.scenario_id, demo.n_agents, g.seed);
        if (run.up_to_date()) return 0;
        eps = rollout(*spec, make_gdt_policy(m.agents, demo, spec->auv), o.rollouts, derive_seed(g.seed, {9}),
                      "maigdt");
        json sc = json::array();
        for (int i = 0; i < m.n_agents; ++i) {
            const auto tr = agent_trajectories({demo}, i, spec->auv);
            sc.push_back(self_consistency_mse(m.agents[static_cast<std::size_t>(i)], tr.front()));
        }
        report["self_consistency_mse"] = sc;
        report["demo_mean_yaw_rate"] = mean_yaw_rate({demo});
    } else if (o.policy == "random") {
        if (!spec) throw CLI::ValidationError("--scenario", "required for --policy random");
        if (run.up_to_date()) return 0;
        eps = rollout(*spec, random_policy(derive_seed(g.seed, {7})), o.rollouts, derive_seed(g.seed, {8}), "random");
    } else if (!o.policy.empty()) {
        throw CLI::ValidationError("--policy", "unknown policy '" + o.policy + "'");
    } else {
        if (!spec) throw CLI::ValidationError("--scenario", "required for --baseline");
        const RewardSetting setting = reward_setting_from_string(o.baseline);
        if (run.up_to_date()) return 0;
        if (!cal && !expert.empty()) cal = calibrate(*spec, expert, derive_seed(g.seed, {3}), o.calibrate_episodes);
        MadacConfig cfg;
        cfg.env_steps = o.steps;
        cfg.warmup_steps = o.warmup;
        cfg.hidden = o.hidden;
        cfg.seed = g.seed;
        const auto res = sac_ctde_baseline(*spec, setting, cfg, o.rollouts, cal ? &*cal : nullptr);
        eps = res.episodes;
        report["tracking_failures"] = res.tracking_failures;
        report["aborted"] = res.aborted;
    }

    if (!cal && !expert.empty()) {
        if (!spec) throw CLI::ValidationError("--scenario", "required to calibrate from --demos");
        cal = calibrate(*spec, expert, derive_seed(g.seed, {3}), o.calibrate_episodes);
    }
    const MetricsReport metrics = compute_metrics(eps);
    report["metrics"] = metrics;
    report["mean_yaw_rate"] = mean_yaw_rate(eps);
    if (cal) {
        report["normalized_reward"] = normalized_reward(eps, *cal);
        report["calibration"] = to_json_calibration(*cal);
    }

    std::string text;
    if (o.format == "csv") {
        std::ostringstream os;
        os << "source," << metrics_csv_header() << (cal ? ",normalized_reward" : "") << '\n';
        os << "all," << metrics_csv_row(metrics.overall);
        if (cal) os << ',' << std::setprecision(10) << report["normalized_reward"].get<double>();
        os << '\n';
        for (const auto& [src, m] : metrics.per_source) os << src << ',' << metrics_csv_row(m) << (cal ? "," : "") << '\n';
        text = os.str();
    } else if (o.format == "json") {
        text = report.dump(2) + "\n";
    } else {
        throw CLI::ValidationError("--format", "expected csv or json");
    }
    std::cout << text;
    if (run.has_out()) {
        run.make_out_dir();
        write_text(run.output(o.format == "csv" ? "metrics.csv" : "metrics.json"), text);
        run.write_manifest();
    }
    return 0;
}

struct CheckOpts {
    std::string suite = "all";
};

int cmd_check(const CheckOpts& o, const Globals& g) {
    Run run("check", g, {{"suite", o.suite}});
    std::vector<std::string> suites = o.suite == "all" ? check_suites() : std::vector<std::string>{o.suite};
    std::vector<CheckResult> results;
    for (const auto& s : suites) {
        auto r = run_check_suite(s);
        results.insert(results.end(), r.begin(), r.end());
    }
    json rows = json::array();
    std::vector<std::string> failing;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite << ": " << r.name << ": " << r.detail << '\n';
        if (!r.passed) failing.push_back(r.suite + ": " + r.name);
        // Timings vary run to run; only their verdict goes into the artifact.
        json row = {{"suite", r.suite}, {"name", r.name}, {"passed", r.passed}};
        if (r.name != "runtime") row["value"] = r.value;
        rows.push_back(row);
    }
    if (run.has_out()) {
        run.make_out_dir();
        write_json(run.output("check.json"), rows);
        run.write_manifest();
    }
    if (!failing.empty()) {
        std::cerr << "failing properties:\n";
        for (const auto& f : failing) std::cerr << "  " << f << '\n';
        return 1;
    }
    return 0;
}

struct PlotOpts {
    std::string episodes;
};

int cmd_plot_data(const PlotOpts& o, const Globals& g) {
    Run run("plot-data", g, {{"episodes", o.episodes}});
    run.require_out();
    run.input(o.episodes);
    if (run.up_to_date()) return 0;
    run.make_out_dir();
    const auto eps = read_episodes(o.episodes);
    for (std::size_t k = 0; k < eps.size(); ++k) write_plot_csv(run.output(fmt::format("episode_{:04d}.csv", k)), eps[k]);
    run.write_manifest();
    std::cout << eps.size() << " episode files written\n";
    return 0;
}

void configure_logging() {
    auto logger = spdlog::get("auvtrack");
    if (!logger) {
        logger = spdlog::stderr_color_mt("auvtrack");
        spdlog::set_default_logger(logger);
    }
    spdlog::level::level_enum lvl = spdlog::level::info;
    if (const char* env = std::getenv("FISHER_LOG")) lvl = spdlog::level::from_str(env);
    spdlog::set_level(lvl);
}

}  // namespace

// ---------------------------------------------------------------- plot data and manifests

std::string plot_csv_header(int n_agents) {
    std::string h = "t";
    for (int i = 0; i < n_agents; ++i) h += fmt::format(",x{0},y{0},theta{0}", i);
    return h + ",target_x,target_y,lambda,min_distance,danger";
}

void write_plot_csv(const fs::path& path, const EpisodeRecord& e) {
    std::ostringstream os;
    os << plot_csv_header(e.n_agents) << '\n' << std::setprecision(12);
    for (int t = 0; t < e.length(); ++t) {
        const auto& w = e.steps[static_cast<std::size_t>(t)].world;
        const StepMetrics m = step_metrics(e, t);
        os << (t + 1) * e.dt;
        for (const auto& a : w.agents) os << ',' << a.x << ',' << a.y << ',' << a.theta;
        os << ',' << w.target_pos.x() << ',' << w.target_pos.y() << ',' << m.consistency << ',' << m.min_distance << ','
           << (m.danger ? 1 : 0) << '\n';
    }
    write_text(path, os.str());
}

json read_manifest(const fs::path& dir) { return read_json(dir / "manifest.json"); }

bool manifests_match(const json& a, const json& b) {
    json x = a, y = b;
    x.erase("wall_clock");
    y.erase("wall_clock");
    return x == y;
}

int run_cli(int argc, const char* const* argv) {
    configure_logging();
    CLI::App app{"Multi-AUV target tracking: scenarios, expert demonstrations, imitation learning and checks",
                 "auvtrack"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config; nested objects name subcommand sections");

    Globals g;
    app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    app.add_option("--out", g.out, "Artifact directory");
    app.add_option("--jobs", g.jobs, "Parallel episode workers")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_flag("--resume", g.resume, "Skip the run when the manifest in --out is up to date");

    std::function<int()> action;

    ScenarioOpts so;
    auto* sc = app.add_subcommand("scenario", "Emit or validate a scenario JSON");
    sc->add_option("--id", so.id, "Scenario id")->capture_default_str();
    sc->add_option("--n", so.n, "Number of agents")->check(CLI::Range(1, 8))->capture_default_str();
    sc->add_option("--validate", so.validate, "Scenario JSON file to validate");
    sc->callback([&] { action = [&] { return cmd_scenario(so, g); }; });

    ExpertOpts eo;
    auto* ex = app.add_subcommand("expert", "Train the waypoint tracker and collect APF demonstrations");
    ex->add_option("--scenario", eo.scenario, "Scenario id or JSON file")->capture_default_str();
    ex->add_option("--n", eo.n, "Number of agents")->check(CLI::Range(1, 8))->capture_default_str();
    ex->add_option("--episodes", eo.episodes, "Demonstrations to collect")->check(CLI::PositiveNumber)->capture_default_str();
    ex->add_option("--tracker", eo.tracker, "Pretrained tracker checkpoint");
    ex->add_option("--tracker-budget", eo.tracker_budget, "Tracker training steps")->capture_default_str();
    ex->callback([&] { action = [&] { return cmd_expert(eo, g); }; });

    MadacOpts mo;
    auto* tm = app.add_subcommand("train-madac", "Adversarial multi-agent imitation");
    tm->add_option("--scenario", mo.scenario, "Scenario id or JSON file")->capture_default_str();
    tm->add_option("--n", mo.n, "Number of agents")->check(CLI::Range(1, 8))->capture_default_str();
    tm->add_option("--demos", mo.demos, "Demonstration episodes (JSON lines)")->required();
    tm->add_option("--demo-count", mo.demo_count, "Use only the first k demonstrations (0 = all)");
    tm->add_option("--steps", mo.steps, "Environment steps")->capture_default_str();
    tm->add_option("--warmup", mo.warmup, "Uniform-action steps before updates")->capture_default_str();
    tm->add_option("--batch", mo.batch)->capture_default_str();
    tm->add_option("--hidden", mo.hidden)->capture_default_str();
    tm->add_option("--layers", mo.layers, "Hidden layers")->capture_default_str();
    tm->add_option("--lr", mo.lr)->capture_default_str();
    tm->add_flag("--decentralized", mo.decentralized, "One discriminator per agent");
    tm->add_flag("--literal-sign", mo.literal_sign, "Label replay as 1 and expert as 0");
    tm->add_flag("--no-sn", mo.no_sn, "Disable spectral normalization");
    tm->add_option("--gp", mo.gp, "Gradient penalty coefficient")->capture_default_str();
    tm->add_option("--calibrate-episodes", mo.calibrate_episodes)->capture_default_str();
    tm->add_option("--eval-episodes", mo.eval_episodes)->capture_default_str();
    tm->callback([&] { action = [&] { return cmd_train_madac(mo, g); }; });

    ExportOpts xo;
    auto* xp = app.add_subcommand("export-offline", "Roll out a trained MADAC policy into an offline dataset");
    xp->add_option("--madac", xo.madac, "train-madac output directory")->required();
    xp->add_option("--scenario", xo.scenarios, "Scenario ids or JSON files (repeatable)");
    xp->add_option("--episodes", xo.episodes, "Episodes per scenario")->capture_default_str();
    xp->callback([&] { action = [&] { return cmd_export_offline(xo, g); }; });

    GdtOpts go;
    auto* tg = app.add_subcommand("train-maigdt", "Hindsight-conditioned decision transformers, one per agent");
    tg->add_option("--dataset", go.dataset, "Offline episodes (JSON lines)")->required();
    tg->add_option("--n", go.n, "Number of agents (default: from the dataset)");
    tg->add_option("--steps", go.steps)->capture_default_str();
    tg->add_option("--context", go.context, "Context length K")->capture_default_str();
    tg->add_option("--embed", go.embed)->capture_default_str();
    tg->add_option("--blocks", go.blocks)->capture_default_str();
    tg->add_option("--z-dim", go.z_dim)->capture_default_str();
    tg->add_option("--batch", go.batch)->capture_default_str();
    tg->add_option("--lr", go.lr)->capture_default_str();
    tg->callback([&] { action = [&] { return cmd_train_maigdt(go, g); }; });

    EvalOpts vo;
    auto* ev = app.add_subcommand("eval", "Metrics, normalized reward and the reward-function baseline");
    ev->add_option("--episodes", vo.episodes, "Recorded episodes to score");
    ev->add_option("--policy", vo.policy, "madac, maigdt or random");
    ev->add_option("--model", vo.model, "Model directory");
    ev->add_option("--demo", vo.demo, "Conditioning demonstration, path#index");
    ev->add_option("--scenario", vo.scenario, "Scenario id or JSON file");
    ev->add_option("--n", vo.n)->capture_default_str();
    ev->add_option("--rollouts", vo.rollouts, "Evaluation episodes")->capture_default_str();
    ev->add_option("--calibration", vo.calibration, "calibration.json from train-madac");
    ev->add_option("--demos", vo.demos, "Expert episodes for calibration");
    ev->add_option("--calibrate-episodes", vo.calibrate_episodes)->capture_default_str();
    ev->add_option("--baseline", vo.baseline, "cooperative, mixed or split");
    ev->add_option("--steps", vo.steps, "Baseline environment steps")->capture_default_str();
    ev->add_option("--warmup", vo.warmup)->capture_default_str();
    ev->add_option("--hidden", vo.hidden)->capture_default_str();
    ev->add_option("--format", vo.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    ev->callback([&] { action = [&] { return cmd_eval(vo, g); }; });

    CheckOpts co;
    auto* ck = app.add_subcommand("check", "Numerical property suites");
    std::vector<std::string> names = check_suites();
    names.emplace_back("all");
    ck->add_option("--suite", co.suite)->check(CLI::IsMember(names))->capture_default_str();
    ck->callback([&] { action = [&] { return cmd_check(co, g); }; });

    PlotOpts po;
    auto* pd = app.add_subcommand("plot-data", "Per-step trajectory CSV files");
    pd->add_option("--episodes", po.episodes, "Episodes (JSON lines)")->required();
    pd->callback([&] { action = [&] { return cmd_plot_data(po, g); }; });

    for (auto* s : {sc, ex, tm, xp, tg, ev, ck, pd}) s->configurable();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        return action();
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("auvtrack");
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace auvtrack
