#include "auvtrack/scenario.hpp"

#include "auvtrack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace auvtrack {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Vector2d unit(double a) { return {std::cos(a), std::sin(a)}; }
Eigen::Vector2d left_normal(const Eigen::Vector2d& t) { return {-t.y(), t.x()}; }

// Base centre-line (line or arc) at parameter s.
Eigen::Vector2d base_point(const TargetPathSpec& p, double s, double* heading) {
    if (p.turn_radius > 0.0) {
        const double k = p.turn / p.turn_radius;
        const double h = p.heading + k * s;
        if (heading) *heading = h;
        // Closed form for a circular arc starting at `start` with tangent `heading`.
        const Eigen::Vector2d c = p.start + (1.0 / k) * left_normal(unit(p.heading));
        return c - (1.0 / k) * left_normal(unit(h));
    }
    if (heading) *heading = p.heading;
    return p.start + s * unit(p.heading);
}

Eigen::Vector2d catmull_rom(const Eigen::Vector2d& p0, const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                            const Eigen::Vector2d& p3, double t) {
    const double t2 = t * t;
    const double t3 = t2 * t;
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                  (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

std::vector<Eigen::Vector2d> raw_points(const TargetPathSpec& p, double length) {
    std::vector<Eigen::Vector2d> raw;
    const double step = 0.02;
    switch (p.kind) {
        case PathKind::kLine:
        case PathKind::kArc:
            for (double s = 0.0; s <= length + 1.0; s += step) {
                raw.push_back(base_point(p, s, nullptr));
            }
            break;
        case PathKind::kSine: {
            // Base parameter is stretched by the wiggle, so overshoot generously.
            const double reach = length * (1.0 + 2.0 * std::pow(2.0 * kPi * p.amplitude / p.wavelength, 2)) + 10.0;
            for (double s = 0.0; s <= reach; s += step) {
                double h = 0.0;
                const Eigen::Vector2d c = base_point(p, s, &h);
                raw.push_back(c + p.turn * p.amplitude * std::sin(2.0 * kPi * s / p.wavelength) *
                                      left_normal(unit(h)));
            }
            break;
        }
        case PathKind::kWaypointSpline: {
            std::vector<Eigen::Vector2d> w;
            w.push_back(p.start);
            for (const auto& q : p.waypoints) w.push_back(q);
            if (w.size() < 2) {
                w.push_back(p.start + 10.0 * unit(p.heading));
            }
            // Phantom end points keep the end tangents along the first/last legs.
            std::vector<Eigen::Vector2d> c;
            c.push_back(w.front() - (w[1] - w[0]));
            for (const auto& q : w) c.push_back(q);
            c.push_back(w.back() + (w.back() - w[w.size() - 2]));
            for (std::size_t i = 1; i + 2 < c.size(); ++i) {
                const double seg = (c[i + 1] - c[i]).norm();
                const int n = std::max(2, static_cast<int>(seg / step));
                for (int k = 0; k < n; ++k) {
                    raw.push_back(catmull_rom(c[i - 1], c[i], c[i + 1], c[i + 2], static_cast<double>(k) / n));
                }
            }
            raw.push_back(w.back());
            break;
        }
    }
    return raw;
}

}  // namespace

// ---------------------------------------------------------------- TargetPath

TargetPath::TargetPath(const TargetPathSpec& spec, double length) {
    std::vector<Eigen::Vector2d> raw = raw_points(spec, length);
    // Straight extension if the raw curve is short (splines with few waypoints).
    double raw_len = 0.0;
    for (std::size_t i = 1; i < raw.size(); ++i) raw_len += (raw[i] - raw[i - 1]).norm();
    if (raw_len < length + 1.0) {
        const Eigen::Vector2d dir = (raw.back() - raw[raw.size() - 2]).normalized();
        const Eigen::Vector2d end = raw.back();
        for (double s = 0.02; s <= length + 1.0 - raw_len + 0.02; s += 0.02) raw.push_back(end + s * dir);
    }
    // Resample at uniform arc-length spacing.
    pts_.push_back(raw.front());
    double carry = 0.0;
    for (std::size_t i = 1; i < raw.size(); ++i) {
        const Eigen::Vector2d a = raw[i - 1];
        const Eigen::Vector2d b = raw[i];
        const double seg = (b - a).norm();
        double pos = ds_ - carry;
        while (pos <= seg) {
            pts_.push_back(a + (pos / seg) * (b - a));
            pos += ds_;
        }
        carry = seg - (pos - ds_);
    }
    length_ = ds_ * static_cast<double>(pts_.size() - 1);
}

Eigen::Vector2d TargetPath::point(double s) const {
    s = std::clamp(s, 0.0, length_);
    const double f = s / ds_;
    const auto i = std::min(static_cast<std::size_t>(f), pts_.size() - 2);
    const double t = f - static_cast<double>(i);
    return (1.0 - t) * pts_[i] + t * pts_[i + 1];
}

Eigen::Vector2d TargetPath::tangent(double s) const {
    s = std::clamp(s, 0.0, length_);
    const auto i = std::min(static_cast<std::size_t>(s / ds_), pts_.size() - 2);
    return (pts_[i + 1] - pts_[i]).normalized();
}

double TargetPath::distance_to(const Eigen::Vector2d& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
        const Eigen::Vector2d a = pts_[i];
        const Eigen::Vector2d ab = pts_[i + 1] - a;
        const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (a + t * ab - p).norm());
    }
    return best;
}

// ---------------------------------------------------------------- specs

RewardWeights RewardWeights::for_setting(RewardSetting s) {
    RewardWeights w;
    switch (s) {
        case RewardSetting::kCooperative: w.a = 1.0; w.b = 0.0; break;
        case RewardSetting::kMixed: w.a = 0.5; w.b = 0.5; break;
        case RewardSetting::kSplit: w.a = 0.0; w.b = 1.0; break;
    }
    return w;
}

void ScenarioSpec::validate() const {
    if (n_agents < 1 || n_agents > 8) {
        throw ConfigError("n_agents must be in 1..8, got " + std::to_string(n_agents));
    }
    if (duration_steps <= 0) {
        throw ConfigError("duration must be positive");
    }
    if (n_obs_slots < 0) {
        throw ConfigError("n_obs_slots must be non-negative");
    }
    hydro.validate();
    auv.validate();
    if (!(target.speed > 0.0) || target.speed > auv.v_max) {
        throw ConfigError("target speed must be in (0, v_max]");
    }
    if (randomization.speed_max > randomization.speed_min &&
        (randomization.speed_min <= 0.0 || randomization.speed_max > auv.v_max)) {
        throw ConfigError("target speed range must lie in (0, v_max]");
    }
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
        if (!(obstacles[i].radius > 0.0)) {
            throw ConfigError("obstacle radius must be positive");
        }
        for (std::size_t j = i + 1; j < obstacles.size(); ++j) {
            if ((obstacles[i].center - obstacles[j].center).norm() < obstacles[i].radius + obstacles[j].radius) {
                throw ConfigError("obstacles " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
            }
        }
    }
}

std::vector<std::string> scenario_ids() { return {"1", "2-cw", "2-ccw", "3", "4", "5", "G1", "G2"}; }

namespace {

// Obstacle at arc length s, lateral offset `lat` (left positive) of a path.
Obstacle beside(const TargetPath& path, double s, double lat, double r) {
    const Eigen::Vector2d t = path.tangent(s);
    return {path.point(s) + lat * left_normal(t), r};
}

void random_obstacles(ScenarioSpec& spec, int count, double min_clearance, std::mt19937_64& rng) {
    const double len = spec.randomization.speed_max * spec.duration_steps * spec.auv.dt;
    TargetPath path(spec.target, len + 20.0);
    std::uniform_real_distribution<double> s_dist(25.0, len);
    std::uniform_real_distribution<double> lat_dist(min_clearance + 4.0, min_clearance + 24.0);
    std::uniform_real_distribution<double> r_dist(2.5, 4.5);
    std::bernoulli_distribution side(0.5);
    int attempts = 0;
    while (static_cast<int>(spec.obstacles.size()) < count) {
        if (++attempts > 10000) {
            throw ConfigError("could not place random obstacles");
        }
        const double r = r_dist(rng);
        Obstacle o = beside(path, s_dist(rng), (side(rng) ? 1.0 : -1.0) * (lat_dist(rng) + r), r);
        if (path.distance_to(o.center) - o.radius < min_clearance) continue;
        bool clash = false;
        for (const auto& q : spec.obstacles) {
            if ((q.center - o.center).norm() < q.radius + o.radius + 4.0) clash = true;
        }
        if (!clash) spec.obstacles.push_back(o);
    }
}

}  // namespace

ScenarioSpec make_scenario(const std::string& id_in, int n_agents, std::uint64_t seed) {
    const std::string id = id_in == "2" ? "2-cw" : id_in;
    ScenarioSpec s;
    s.id = id;
    s.n_agents = n_agents;
    s.seed = seed;
    s.reward = RewardWeights::for_setting(s.setting);
    s.randomization.obstacle_jitter_sd = 0.3;
    s.randomization.radius_jitter_sd = 0.1;
    s.randomization.deviation_prob = 0.01;
    s.randomization.deviation_max = 1.0;
    std::mt19937_64 rng(seed ^ 0x5ce7a710ULL);
    std::normal_distribution<double> jitter(0.0, 0.5);

    if (id == "1") {
        s.target.kind = PathKind::kLine;
        s.obstacles = {{{50.0, 23.0}, 4.0}};
    } else if (id == "2-cw" || id == "2-ccw") {
        s.target.kind = PathKind::kSine;
        s.target.turn = id == "2-ccw" ? 1 : -1;
        s.target.turn_radius = 60.0;
        s.target.amplitude = 20.0;
        s.target.wavelength = 120.0;
        TargetPath path(s.target, 140.0);
        // Offsets are mirrored together with the path.
        s.obstacles = {beside(path, 45.0, s.target.turn * 30.0, 3.5), beside(path, 95.0, -s.target.turn * 30.0, 3.5)};
    } else if (id == "3") {
        s.target.kind = PathKind::kLine;
        const double radii[4] = {3.0, 4.0, 5.0, 4.0};
        for (int k = 0; k < 4; ++k) {
            const double x = 14.0 + 22.0 * k;
            s.obstacles.push_back({{x, 22.0 + radii[k] - 4.0}, radii[k]});
            s.obstacles.push_back({{x + 11.0, -(22.0 + radii[3 - k] - 4.0)}, radii[3 - k]});
        }
    } else if (id == "4") {
        s.target.kind = PathKind::kLine;
        std::uniform_real_distribution<double> r_dist(3.0, 3.5);
        for (double x : {15.0, 50.0, 85.0}) {
            for (double y : {-40.0, -22.0, 22.0, 40.0}) {
                const double r = r_dist(rng);
                const double ys = y > 0 ? 1.0 : -1.0;
                // Jitter only away from the lane so the inner rows keep their clearance.
                s.obstacles.push_back({{x + jitter(rng), y + ys * std::abs(jitter(rng))}, r});
            }
        }
    } else if (id == "5") {
        s.target.kind = PathKind::kArc;
        s.target.turn = 1;
        s.target.turn_radius = 80.0;
        TargetPath path(s.target, 140.0);
        for (double sl : {20.0, 55.0, 90.0}) {
            s.obstacles.push_back(beside(path, sl, 23.5, 3.5));
            s.obstacles.push_back(beside(path, sl + 17.0, -23.5, 3.5));
        }
    } else if (id == "G1" || id == "G2") {
        const bool hard = id == "G2";
        s.duration_steps = 2250;
        s.target.kind = PathKind::kWaypointSpline;
        s.randomization.speed_min = 0.8;
        s.randomization.speed_max = 1.5;
        s.target.speed = 1.2;
        s.randomization.obstacle_jitter_sd = 0.0;
        s.randomization.radius_jitter_sd = 0.0;
        s.randomization.deviation_prob = 0.02;
        s.randomization.deviation_max = 1.5;
        std::uniform_real_distribution<double> turn(hard ? -0.8 : -0.5, hard ? 0.8 : 0.5);
        double h = 0.0;
        Eigen::Vector2d p = Eigen::Vector2d::Zero();
        for (int k = 0; k < 9; ++k) {
            p += 40.0 * unit(h);
            s.target.waypoints.push_back(p);
            h += turn(rng);
        }
        random_obstacles(s, hard ? 10 : 6, 18.0, rng);
    } else {
        throw ConfigError("unknown scenario id '" + id_in + "'");
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------- JSON

std::string to_string(PathKind k, int turn) {
    switch (k) {
        case PathKind::kLine: return "line";
        case PathKind::kSine: return "sine";
        case PathKind::kArc: return turn < 0 ? "arc-cw" : "arc-ccw";
        case PathKind::kWaypointSpline: return "waypoint-spline";
    }
    return "line";
}

std::string to_string(RewardSetting s) {
    switch (s) {
        case RewardSetting::kCooperative: return "cooperative";
        case RewardSetting::kMixed: return "mixed";
        case RewardSetting::kSplit: return "split";
    }
    return "cooperative";
}

RewardSetting reward_setting_from_string(const std::string& s) {
    if (s == "cooperative") return RewardSetting::kCooperative;
    if (s == "mixed") return RewardSetting::kMixed;
    if (s == "split") return RewardSetting::kSplit;
    throw ConfigError("unknown reward setting '" + s + "'");
}

void to_json(nlohmann::json& j, const Obstacle& o) {
    j = nlohmann::json{{"x", o.center.x()}, {"y", o.center.y()}, {"radius", o.radius}};
}

void from_json(const nlohmann::json& j, Obstacle& o) {
    o.center = {j.at("x").get<double>(), j.at("y").get<double>()};
    o.radius = j.at("radius").get<double>();
}

void to_json(nlohmann::json& j, const HydroParams& h) {
    j = nlohmann::json{{"sl", h.sl}, {"ts", h.ts}, {"di", h.di}, {"dt", h.dt_thresh}, {"nl", h.nl}, {"f_khz", h.f}};
}

void from_json(const nlohmann::json& j, HydroParams& h) {
    h.sl = j.value("sl", h.sl);
    h.ts = j.value("ts", h.ts);
    h.di = j.value("di", h.di);
    h.dt_thresh = j.value("dt", h.dt_thresh);
    h.nl = j.value("nl", h.nl);
    h.f = j.value("f_khz", h.f);
}

void to_json(nlohmann::json& j, const AuvParams& p) {
    j = nlohmann::json{{"m", {p.m11, p.m22, p.m33}},
                       {"d_lin", p.d_lin},
                       {"d_quad", p.d_quad},
                       {"v_max", p.v_max},
                       {"w_max", p.w_max},
                       {"k_v", p.k_v},
                       {"k_w", p.k_w},
                       {"dt", p.dt},
                       {"tau_max", p.tau_max}};
}

void from_json(const nlohmann::json& j, AuvParams& p) {
    if (j.contains("m")) {
        const auto m = j.at("m").get<std::array<double, 3>>();
        p.m11 = m[0];
        p.m22 = m[1];
        p.m33 = m[2];
    }
    p.d_lin = j.value("d_lin", p.d_lin);
    p.d_quad = j.value("d_quad", p.d_quad);
    p.v_max = j.value("v_max", p.v_max);
    p.w_max = j.value("w_max", p.w_max);
    p.k_v = j.value("k_v", p.k_v);
    p.k_w = j.value("k_w", p.k_w);
    p.dt = j.value("dt", p.dt);
    p.tau_max = j.value("tau_max", p.tau_max);
}

void to_json(nlohmann::json& j, const ScenarioSpec& s) {
    nlohmann::json wp = nlohmann::json::array();
    for (const auto& w : s.target.waypoints) wp.push_back({w.x(), w.y()});
    const RewardWeights def = RewardWeights::for_setting(s.setting);
    nlohmann::json overrides = nlohmann::json::object();
    auto note = [&](const char* k, double v, double d) {
        if (v != d) overrides[k] = v;
    };
    note("w1", s.reward.w1, def.w1);
    note("w2", s.reward.w2, def.w2);
    note("w3_total", s.reward.w3_total, def.w3_total);
    note("a", s.reward.a, def.a);
    note("b", s.reward.b, def.b);
    note("d_min_t", s.reward.d_min_t, def.d_min_t);
    note("d_safe", s.reward.d_safe, def.d_safe);
    note("lambda_max_per_agent", s.reward.lambda_max_per_agent, def.lambda_max_per_agent);
    note("lambda0_per_agent", s.reward.lambda0_per_agent, def.lambda0_per_agent);
    j = nlohmann::json{
        {"id", s.id},
        {"n_agents", s.n_agents},
        {"duration_s", s.duration_steps * s.auv.dt},
        {"n_obs_slots", s.n_obs_slots},
        {"hydro", s.hydro},
        {"auv_params", s.auv},
        {"reward", {{"setting", to_string(s.setting)}, {"overrides", overrides}}},
        {"obstacles", s.obstacles},
        {"target",
         {{"kind", to_string(s.target.kind, s.target.turn)},
          {"speed", s.target.speed},
          {"params",
           {{"start", {s.target.start.x(), s.target.start.y()}},
            {"heading", s.target.heading},
            {"turn", s.target.turn},
            {"turn_radius", s.target.turn_radius},
            {"amplitude", s.target.amplitude},
            {"wavelength", s.target.wavelength},
            {"waypoints", wp}}}}},
        {"randomization",
         {{"obstacle_jitter_sd", s.randomization.obstacle_jitter_sd},
          {"radius_jitter_sd", s.randomization.radius_jitter_sd},
          {"target_speed_range", {s.randomization.speed_min, s.randomization.speed_max}},
          {"deviation_prob", s.randomization.deviation_prob},
          {"deviation_max", s.randomization.deviation_max},
          {"spawn_jitter_sd", s.randomization.spawn_jitter_sd},
          {"disturbance_sd", s.randomization.disturbance_sd}}},
        {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ScenarioSpec& s) {
    s = ScenarioSpec{};
    s.id = j.at("id").get<std::string>();
    s.n_agents = j.at("n_agents").get<int>();
    if (j.contains("hydro")) s.hydro = j.at("hydro").get<HydroParams>();
    if (j.contains("auv_params")) s.auv = j.at("auv_params").get<AuvParams>();
    s.duration_steps = static_cast<int>(std::lround(j.at("duration_s").get<double>() / s.auv.dt));
    s.n_obs_slots = j.value("n_obs_slots", 3);
    if (j.contains("reward")) {
        const auto& r = j.at("reward");
        s.setting = reward_setting_from_string(r.value("setting", std::string("cooperative")));
        s.reward = RewardWeights::for_setting(s.setting);
        if (r.contains("overrides")) {
            const auto& o = r.at("overrides");
            s.reward.w1 = o.value("w1", s.reward.w1);
            s.reward.w2 = o.value("w2", s.reward.w2);
            s.reward.w3_total = o.value("w3_total", s.reward.w3_total);
            s.reward.a = o.value("a", s.reward.a);
            s.reward.b = o.value("b", s.reward.b);
            s.reward.d_min_t = o.value("d_min_t", s.reward.d_min_t);
            s.reward.d_safe = o.value("d_safe", s.reward.d_safe);
            s.reward.lambda_max_per_agent = o.value("lambda_max_per_agent", s.reward.lambda_max_per_agent);
            s.reward.lambda0_per_agent = o.value("lambda0_per_agent", s.reward.lambda0_per_agent);
        }
    }
    s.obstacles = j.value("obstacles", std::vector<Obstacle>{});
    const auto& t = j.at("target");
    const auto kind = t.at("kind").get<std::string>();
    const auto& p = t.contains("params") ? t.at("params") : nlohmann::json::object();
    s.target.turn = p.value("turn", 1);
    if (kind == "line") {
        s.target.kind = PathKind::kLine;
    } else if (kind == "sine") {
        s.target.kind = PathKind::kSine;
    } else if (kind == "arc-cw" || kind == "arc-ccw") {
        s.target.kind = PathKind::kArc;
        s.target.turn = kind == "arc-cw" ? -1 : 1;
    } else if (kind == "waypoint-spline") {
        s.target.kind = PathKind::kWaypointSpline;
    } else {
        throw ConfigError("unknown target kind '" + kind + "'");
    }
    s.target.speed = t.at("speed").get<double>();
    if (p.contains("start")) {
        const auto st = p.at("start").get<std::array<double, 2>>();
        s.target.start = {st[0], st[1]};
    }
    s.target.heading = p.value("heading", 0.0);
    s.target.turn_radius = p.value("turn_radius", 0.0);
    s.target.amplitude = p.value("amplitude", 0.0);
    s.target.wavelength = p.value("wavelength", 1.0);
    if (p.contains("waypoints")) {
        for (const auto& w : p.at("waypoints")) {
            s.target.waypoints.emplace_back(w.at(0).get<double>(), w.at(1).get<double>());
        }
    }
    if (j.contains("randomization")) {
        const auto& r = j.at("randomization");
        s.randomization.obstacle_jitter_sd = r.value("obstacle_jitter_sd", 0.0);
        s.randomization.radius_jitter_sd = r.value("radius_jitter_sd", 0.0);
        if (r.contains("target_speed_range")) {
            const auto sr = r.at("target_speed_range").get<std::array<double, 2>>();
            s.randomization.speed_min = sr[0];
            s.randomization.speed_max = sr[1];
        }
        s.randomization.deviation_prob = r.value("deviation_prob", 0.0);
        s.randomization.deviation_max = r.value("deviation_max", 0.0);
        s.randomization.spawn_jitter_sd = r.value("spawn_jitter_sd", 0.5);
        s.randomization.disturbance_sd = r.value("disturbance_sd", 0.0);
    }
    s.seed = j.value("seed", std::uint64_t{0});
    s.validate();
}

}  // namespace auvtrack
