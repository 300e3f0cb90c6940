// Desk-scale acceptance run. Drives the auvtrack binary for the pipeline
// criteria and checks the numerical ones against oracles written here.
// Prints one PASS/FAIL line per criterion at the end; exit 0 iff all pass.

#include "auvtrack/checks.hpp"
#include "auvtrack/cli.hpp"
#include "auvtrack/env.hpp"
#include "auvtrack/episode_io.hpp"
#include "auvtrack/hashing.hpp"
#include "auvtrack/runtime.hpp"
#include "auvtrack/scenario.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sys/wait.h>

using namespace auvtrack;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string g_cli;
fs::path g_work;

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'') {
            q += "'\\''";
        } else {
            q += c;
        }
    }
    return q + "'";
}

struct Timed {
    int rc = 0;
    double seconds = 0.0;
};

Timed run(const std::vector<std::string>& args) {
    std::string cmd = quote(g_cli);
    for (const auto& a : args) cmd += " " + quote(a);
    std::cout << ".. " << cmd << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    const int status = std::system(cmd.c_str());
    Timed t;
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    t.rc = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
    return t;
}

std::string path(const std::string& rel) { return (g_work / rel).string(); }
json load(const std::string& rel) { return json::parse(read_file(g_work / rel)); }

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

Verdict suite_verdict(const std::string& suite) {
    Verdict v{true, ""};
    for (const auto& r : run_check_suite(suite)) {
        if (!r.passed) v.pass = false;
        if (!v.detail.empty()) v.detail += "; ";
        v.detail += (r.passed ? "" : "FAILED ") + r.name + " " + r.detail;
    }
    return v;
}

// ---------------------------------------------------------------- expert stage (shared)

struct ExpertStage {
    bool ok = false;
    double seconds = 0.0;
    std::string tracker;
    std::string detail;
};

const ExpertStage& expert_stage() {
    static std::optional<ExpertStage> st;
    if (st) return *st;
    st.emplace();
    fs::remove_all(g_work / "expert");
    const auto a = run({"expert", "--scenario", "1", "--n", "2", "--episodes", "10", "--seed", "1", "--out",
                        path("expert/s1")});
    st->seconds += a.seconds;
    st->tracker = path("expert/s1/tracker.ckpt");
    if (a.rc != 0) {
        st->detail = fmt::format("expert on scenario 1 exited {}", a.rc);
        return *st;
    }
    const auto b = run({"expert", "--scenario", "4", "--n", "2", "--episodes", "10", "--seed", "1", "--tracker",
                        st->tracker, "--out", path("expert/s4")});
    st->seconds += b.seconds;
    if (b.rc != 0) {
        st->detail = fmt::format("expert on scenario 4 exited {}", b.rc);
        return *st;
    }
    st->ok = true;
    return *st;
}

// ---------------------------------------------------------------- criteria

Verdict c1_sonar() { return suite_verdict("sonar"); }

// Pair weight of two agents d metres apart: received level over noise.
double oracle_pair_weight(double d, const HydroParams& h) {
    const double f2 = h.f * h.f;
    const double alpha = 0.11 * f2 / (1 + f2) + 44 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003;
    return h.sl - (20 * std::log10(d) + alpha * d / 1000) - h.nl + h.di;
}

// Spacing at which a complete graph of n equal pair weights has algebraic connectivity lambda.
double implied_spacing(double lambda, int n, const HydroParams& h) {
    double lo = 0.5, hi = 1000.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (n * oracle_pair_weight(mid, h) > lambda ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Verdict c2_connectivity() {
    Verdict v = suite_verdict("laplacian");
    const auto& ex = expert_stage();
    if (!ex.ok) return {false, v.detail + "; " + ex.detail};
    const HydroParams hp;
    const double reference[] = {100.1, 150.2, 200.2};
    for (int n = 2; n <= 4; ++n) {
        std::string dir = "expert/s1";
        if (n > 2) {
            dir = fmt::format("connectivity/n{}", n);
            const auto r = run({"expert", "--scenario", "1", "--n", std::to_string(n), "--episodes", "10", "--seed",
                                "1", "--tracker", ex.tracker, "--out", path(dir)});
            if (r.rc != 0) return {false, fmt::format("expert with {} agents exited {}", n, r.rc)};
        }
        const double lam = load(dir + "/expert.json").at("metrics").at("overall").at("mean_consistency");
        const double ref = reference[n - 2];
        const bool ok = std::abs(lam - ref) <= 3.0;
        v.pass = v.pass && ok;
        v.detail += fmt::format("; N={} lambda {:.2f} vs {:.1f} (implied spacing {:.2f} m vs {:.2f} m){}", n, lam, ref,
                                implied_spacing(lam, n, hp), implied_spacing(ref, n, hp), ok ? "" : " FAILED");
    }
    return v;
}

Verdict c3_reward() {
    const HydroParams hp;
    const RewardWeights rw = RewardWeights::for_setting(RewardSetting::kCooperative);
    // Two agents 12 m apart, both 16 m from the target, no obstacles.
    WorldSnapshot w;
    AuvState a, b;
    a.y = 6.0;
    b.y = -6.0;
    w.agents = {a, b};
    w.target_pos = {std::sqrt(16.0 * 16.0 - 36.0), 0.0};
    const auto r = compute_rewards(w, {}, rw, hp);
    const double lam = 2 * oracle_pair_weight(12.0, hp);
    const double hand = -0.25 * (16.0 - 12.0) + (-0.2 / 2) * (2 * 50.0 - lam);
    const double rounded = -0.25 * (16.0 - 12.0) + (-0.2 / 2) * (2 * 50.0 - 102.80);
    const double err = std::max(std::abs(r[0].total - hand), std::abs(r[1].total - hand));
    const bool ok = err < 1e-9 && std::abs(rounded - (-0.72)) < 1e-9 && std::abs(lam - 102.80) <= 0.02;
    return {ok, fmt::format("r = {:.6f} (hand {:.6f}, |diff| {:.2g}); lambda {:.4f}; with lambda = 102.80 r = {:.2f}",
                            r[0].total, hand, err, lam, rounded)};
}

Verdict c4_expert() {
    const auto& ex = expert_stage();
    if (!ex.ok) return {false, ex.detail};
    Verdict v{true, ""};
    const json t = load("expert/s1/expert.json").at("tracker");
    const double stat = t.at("stationary_error");
    v.pass = stat < 0.2;
    v.detail = fmt::format("tracker steady-state error {:.3f} m", stat);
    for (const std::string s : {"1", "4"}) {
        const json m = load("expert/s" + s + "/expert.json").at("metrics").at("overall");
        const double mind = m.at("mean_min_distance");
        const double mino = m.at("min_obstacle_distance");
        const double danger = m.at("danger_time");
        const bool ok = std::abs(mind - 12.0) <= 1.0 && mino >= 9.8 && danger == 0.0;
        v.pass = v.pass && ok;
        v.detail += fmt::format("; scenario {}: min-distance {:.2f} m, obstacle {:.2f} m, danger {:.2f} s{}", s, mind,
                                mino, danger, ok ? "" : " FAILED");
    }
    v.pass = v.pass && ex.seconds < 600.0;
    v.detail += fmt::format("; {:.0f} s total", ex.seconds);
    return v;
}

Verdict c5_autodiff() { return suite_verdict("gradient"); }

Verdict c6_madac() {
    const auto& ex = expert_stage();
    if (!ex.ok) return {false, ex.detail};
    const std::string demos = path("expert/s1/demos.jsonl");
    std::map<int, std::vector<double>> norm;
    double slowest = 0.0;
    for (int demo_count : {10, 1}) {
        for (int seed = 1; seed <= 3; ++seed) {
            const std::string dir = fmt::format("madac/d{}_s{}", demo_count, seed);
            const auto r = run({"train-madac", "--scenario", "1", "--n", "2", "--demos", demos, "--demo-count",
                                std::to_string(demo_count), "--steps", "40000", "--seed", std::to_string(seed),
                                "--out", path(dir)});
            slowest = std::max(slowest, r.seconds);
            if (r.rc != 0) return {false, fmt::format("train-madac {} exited {}", dir, r.rc)};
            // Both demo counts are scored against the full 10-demonstration calibration.
            const auto e = run({"eval", "--policy", "madac", "--model", path(dir), "--calibration",
                                path("madac/d10_s1/calibration.json"), "--rollouts", "10", "--seed",
                                std::to_string(seed), "--out", path(dir + "/eval")});
            if (e.rc != 0) return {false, fmt::format("eval of {} exited {}", dir, e.rc)};
            norm[demo_count].push_back(load(dir + "/eval/metrics.json").at("normalized_reward"));
        }
    }
    const double m10 = median3(norm[10]), m1 = median3(norm[1]);
    const bool ok = m10 >= 0.6 && m10 >= m1 && slowest <= 7200.0;
    return {ok, fmt::format("normalized reward 10 demos [{:.3f} {:.3f} {:.3f}] median {:.3f}; 1 demo [{:.3f} {:.3f} "
                            "{:.3f}] median {:.3f}; slowest run {:.0f} s",
                            norm[10][0], norm[10][1], norm[10][2], m10, norm[1][0], norm[1][1], norm[1][2], m1,
                            slowest)};
}

double demo_yaw(const std::string& file, int idx) {
    const auto eps = read_episodes(file);
    double acc = 0.0;
    long c = 0;
    for (const auto& st : eps.at(static_cast<std::size_t>(idx)).steps) {
        for (const auto& a : st.actions) {
            acc += a.y();
            ++c;
        }
    }
    return acc / static_cast<double>(c);
}

Verdict c7_maigdt() {
    const auto& ex = expert_stage();
    if (!ex.ok) return {false, ex.detail};
    // 50 training episodes per turn direction plus one held-out conditioning demo each.
    for (const std::string dir : {"cw", "ccw"}) {
        const auto r = run({"expert", "--scenario", "2-" + dir, "--n", "2", "--episodes", "51", "--seed", "2",
                            "--tracker", ex.tracker, "--out", path("maigdt/" + dir)});
        if (r.rc != 0) return {false, fmt::format("expert on 2-{} exited {}", dir, r.rc)};
    }
    std::vector<EpisodeRecord> dataset;
    for (const std::string dir : {"cw", "ccw"}) {
        auto eps = read_episodes(g_work / "maigdt" / dir / "demos.jsonl");
        eps.resize(50);
        for (auto& e : eps) dataset.push_back(std::move(e));
    }
    write_episodes(g_work / "maigdt/dataset.jsonl", dataset);
    const double yaw_cw = demo_yaw(path("maigdt/cw/demos.jsonl"), 50);
    const double yaw_ccw = demo_yaw(path("maigdt/ccw/demos.jsonl"), 50);

    Verdict v{true, fmt::format("{} episodes; demo yaw cw {:+.4f} ccw {:+.4f}", dataset.size(), yaw_cw, yaw_ccw)};
    int flips = 0;
    for (int seed = 1; seed <= 3; ++seed) {
        const std::string gdir = fmt::format("maigdt/gdt_s{}", seed);
        const auto t = run({"train-maigdt", "--dataset", path("maigdt/dataset.jsonl"), "--steps", "1500", "--seed",
                            std::to_string(seed), "--out", path(gdir)});
        if (t.rc != 0) return {false, fmt::format("train-maigdt seed {} exited {}", seed, t.rc)};
        const json final_loss = load(gdir + "/gdt.json").at("final_loss");
        double yaw[2] = {0, 0};
        bool consistent = true;
        double worst_ratio = 0.0;
        int k = 0;
        for (const std::string dir : {"cw", "ccw"}) {
            const auto e = run({"eval", "--policy", "maigdt", "--model", path(gdir), "--demo",
                                path("maigdt/" + dir + "/demos.jsonl") + "#50", "--scenario", "2-" + dir,
                                "--rollouts", "1", "--seed", std::to_string(seed), "--out",
                                path(gdir + "/eval_" + dir)});
            if (e.rc != 0) return {false, fmt::format("eval seed {} {} exited {}", seed, dir, e.rc)};
            const json m = load(gdir + "/eval_" + dir + "/metrics.json");
            yaw[k++] = m.at("mean_yaw_rate");
            for (std::size_t i = 0; i < final_loss.size(); ++i) {
                const double ratio = m.at("self_consistency_mse")[i].get<double>() / final_loss[i].get<double>();
                worst_ratio = std::max(worst_ratio, ratio);
                consistent = consistent && ratio < 2.0;
            }
        }
        const bool flip = (yaw[0] < 0) != (yaw[1] < 0) && (yaw[0] < 0) == (yaw_cw < 0) && (yaw[1] < 0) == (yaw_ccw < 0);
        flips += flip ? 1 : 0;
        v.pass = v.pass && flip && consistent;
        v.detail += fmt::format("; seed {}: yaw cw {:+.4f} ccw {:+.4f}{}, self-consistency/loss max {:.2f}{}", seed,
                                yaw[0], yaw[1], flip ? "" : " NO FLIP", worst_ratio, consistent ? "" : " FAILED");
    }
    v.detail += fmt::format("; flips {}/3", flips);
    return v;
}

Verdict c8_lemma1() { return suite_verdict("lemma1"); }

Verdict c9_determinism() {
    const auto& ex = expert_stage();
    if (!ex.ok) return {false, ex.detail};
    fs::remove_all(g_work / "determinism");
    const auto d = [](const std::string& rel) { return path("determinism/" + rel); };
    struct Case {
        std::string name;
        std::vector<std::string> args;
        bool parallel_b = false;  // second run uses --jobs 2
    };
    const std::vector<Case> cases = {
        {"scenario", {"scenario", "--id", "4", "--n", "3", "--seed", "2"}},
        {"expert", {"expert", "--scenario", "1", "--episodes", "2", "--tracker", ex.tracker, "--seed", "3"}, true},
        {"expert_tracker", {"expert", "--scenario", "1", "--episodes", "1", "--tracker-budget", "3000", "--seed", "3"}},
        {"train-madac",
         {"train-madac", "--demos", d("expert_a/demos.jsonl"), "--steps", "600", "--warmup", "300", "--batch", "64",
          "--hidden", "32", "--calibrate-episodes", "2", "--eval-episodes", "1", "--seed", "3"}},
        {"export-offline",
         {"export-offline", "--madac", d("train-madac_a"), "--scenario", "1", "--scenario", "3", "--episodes", "2",
          "--seed", "3"}},
        {"train-maigdt",
         {"train-maigdt", "--dataset", d("export-offline_a/dataset.jsonl"), "--steps", "20", "--embed", "32",
          "--blocks", "1", "--batch", "4", "--seed", "3"},
         true},
        {"eval_maigdt",
         {"eval", "--policy", "maigdt", "--model", d("train-maigdt_a"), "--demo", d("expert_a/demos.jsonl#1"),
          "--rollouts", "1", "--seed", "3"}},
        {"eval_episodes",
         {"eval", "--episodes", d("export-offline_a/dataset.jsonl"), "--calibration",
          d("train-madac_a/calibration.json"), "--format", "csv"}},
        {"eval_random", {"eval", "--policy", "random", "--scenario", "1", "--rollouts", "2", "--seed", "3"}},
        {"eval_baseline",
         {"eval", "--baseline", "split", "--scenario", "1", "--steps", "600", "--warmup", "300", "--hidden", "32",
          "--rollouts", "1", "--demos", d("expert_a/demos.jsonl"), "--calibrate-episodes", "2", "--seed", "3"}},
        {"check", {"check", "--suite", "all"}},
        {"plot-data", {"plot-data", "--episodes", d("expert_a/demos.jsonl")}},
    };
    Verdict v{true, ""};
    std::set<std::string> commands;
    for (const auto& c : cases) {
        int rc[2];
        for (int k = 0; k < 2; ++k) {
            auto args = c.args;
            args.insert(args.end(), {"--out", d(c.name + (k == 0 ? "_a" : "_b"))});
            if (k == 1 && c.parallel_b) args.insert(args.end(), {"--jobs", "2"});
            rc[k] = run(args).rc;
        }
        bool ok = rc[0] == rc[1] && fs::exists(d(c.name + "_a/manifest.json")) &&
                  fs::exists(d(c.name + "_b/manifest.json"));
        if (ok) {
            const json a = read_manifest(d(c.name + "_a")), b = read_manifest(d(c.name + "_b"));
            ok = manifests_match(a, b) && !a.at("outputs").empty();
        }
        commands.insert(c.args.front());
        if (!ok) {
            v.pass = false;
            v.detail += fmt::format("{} differs (exit {} / {}); ", c.name, rc[0], rc[1]);
        }
    }
    v.pass = v.pass && commands.size() == 8;
    v.detail += fmt::format("{} runs over {} subcommands compared", cases.size(), commands.size());
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Desk-scale acceptance criteria"};
    std::string work = "acceptance_work";
    std::vector<int> only;
    app.add_option("--work", work, "Scratch directory (recreated per stage)");
    app.add_option("--cli", g_cli, "Path of the auvtrack binary")->required();
    app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    g_work = fs::absolute(work);
    fs::create_directories(g_work);

    const std::vector<std::pair<std::string, Verdict (*)()>> criteria = {
        {"sonar pipeline", c1_sonar},
        {"connectivity", c2_connectivity},
        {"reward arithmetic", c3_reward},
        {"expert pipeline", c4_expert},
        {"autodiff", c5_autodiff},
        {"MADAC desk-scale", c6_madac},
        {"MAIGDT desk-scale", c7_maigdt},
        {"Lemma 1 check", c8_lemma1},
        {"determinism", c9_determinism},
    };
    // The expert stage is timed as a whole, so run it before anything else reuses it.
    std::vector<int> order = {1, 3, 5, 8, 4, 2, 6, 7, 9};
    std::vector<std::string> lines(criteria.size());
    bool all = true;
    for (int k : order) {
        if (!only.empty() && std::find(only.begin(), only.end(), k) == only.end()) continue;
        Verdict v;
        try {
            v = criteria[static_cast<std::size_t>(k - 1)].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        all = all && v.pass;
        lines[static_cast<std::size_t>(k - 1)] = fmt::format("{} {}. {}: {}", v.pass ? "PASS" : "FAIL", k,
                                                             criteria[static_cast<std::size_t>(k - 1)].first, v.detail);
        std::cout << ".. done " << lines[static_cast<std::size_t>(k - 1)] << std::endl;
    }
    std::cout << "\n==== acceptance ====\n";
    for (const auto& l : lines) {
        if (!l.empty()) std::cout << l << '\n';
    }
    return all ? 0 : 1;
}
