#include "spinloc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spinloc {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
}

// Pulls known keys out of `j` one by one so leftovers can be reported.
class Fields {
  public:
    Fields(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    template <typename T>
    void take(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            fail(path_ + "." + key, "wrong type");
        }
        j_.erase(it);
    }

    void take_angle_deg(const char* key, double& out_rad) {
        double deg = rad_to_deg(out_rad);
        take(key, deg);
        out_rad = deg_to_rad(deg);
    }

    bool has(const char* key) const { return j_.contains(key); }

    json pop(const char* key) {
        json out = j_.at(key);
        j_.erase(key);
        return out;
    }

    void finish() const {
        if (!j_.empty())
            fail(path_ + "." + j_.begin().key(), "unknown key");
    }

    const std::string& path() const { return path_; }

  private:
    json j_;
    std::string path_;
};

Vec3 parse_vec3(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() ||
        !j[1].is_number() || !j[2].is_number())
        fail(path, "expected [x, y, z] in meters");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

GeometryParams parse_geometry(const json& j, const std::string& path,
                              GeometryParams base) {
    Fields f(j, path);
    f.take("receiver_offset", base.receiver_offset);
    f.take_angle_deg("phi_deg", base.phi);
    f.take_angle_deg("half_width_h_deg", base.half_width_h);
    f.take_angle_deg("half_width_v_deg", base.half_width_v);
    f.take_angle_deg("azimuth_mount_deg", base.azimuth_mount);
    f.take_angle_deg("top_elev_min_deg", base.top_elev_min);
    f.take_angle_deg("top_elev_max_deg", base.top_elev_max);
    f.take_angle_deg("bottom_elev_min_deg", base.bottom_elev_min);
    f.take_angle_deg("bottom_elev_max_deg", base.bottom_elev_max);
    f.take("z_offset_top", base.z_offset_top);
    f.take("z_offset_bottom", base.z_offset_bottom);
    f.take("body_radius", base.body_radius);
    f.finish();
    if (base.receiver_offset <= 0.0) fail(path + ".receiver_offset", "must be positive");
    return base;
}

RobotSpec parse_robot(const json& j, const std::string& path,
                      const GeometryParams& base_geometry) {
    Fields f(j, path);
    RobotSpec spec;
    spec.id = -1;
    f.take("id", spec.id);
    if (spec.id < 0 || spec.id > 63)
        fail(path + ".id", "robot id " + std::to_string(spec.id) +
                               " outside the 6-bit range 0..63");

    std::string role = "beacon";
    f.take("role", role);
    if (role == "beacon")
        spec.role = Role::Beacon;
    else if (role == "drone")
        spec.role = Role::Drone;
    else
        fail(path + ".role", "expected \"beacon\" or \"drone\", got \"" + role + "\"");

    if (!f.has("position")) fail(path + ".position", "missing");
    spec.position = parse_vec3(f.pop("position"), path + ".position");
    f.take("spin_phase", spec.spin_phase);

    if (f.has("waypoints")) {
        if (spec.role == Role::Beacon)
            fail(path + ".waypoints", "beacons are immobile");
        const json wps = f.pop("waypoints");
        if (!wps.is_array()) fail(path + ".waypoints", "expected an array");
        double last_t = -1.0;
        for (std::size_t i = 0; i < wps.size(); ++i) {
            const std::string wpath = path + ".waypoints[" + std::to_string(i) + "]";
            const json& w = wps[i];
            if (!w.is_array() || w.size() != 2 || !w[0].is_number())
                fail(wpath, "expected [t_seconds, [x, y, z]]");
            Waypoint wp{w[0].get<double>(), parse_vec3(w[1], wpath + "[1]")};
            if (wp.t_s < last_t) fail(wpath, "waypoint times must not decrease");
            last_t = wp.t_s;
            spec.waypoints.push_back(wp);
        }
    }
    if (f.has("allowed_peers")) {
        const json peers = f.pop("allowed_peers");
        if (!peers.is_array()) fail(path + ".allowed_peers", "expected an array of ids");
        std::vector<int> ids;
        for (const auto& p : peers) {
            if (!p.is_number_integer()) fail(path + ".allowed_peers", "expected integer ids");
            ids.push_back(p.get<int>());
        }
        spec.allowed_peers = std::move(ids);
    }
    if (f.has("geometry"))
        spec.geometry_override =
            parse_geometry(f.pop("geometry"), path + ".geometry", base_geometry);
    f.finish();
    return spec;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') { ++line; col = 1; }
            else ++col;
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" +
                          std::to_string(col) + ": " + e.what());
    }

    ScenarioConfig cfg;
    Fields f(root, origin);
    f.take("schema_version", cfg.schema_version);
    if (cfg.schema_version != 1)
        fail(origin + ".schema_version",
             "unsupported version " + std::to_string(cfg.schema_version));
    f.take("duration_s", cfg.duration_s);
    f.take("warmup_s", cfg.warmup_s);
    f.take("seed", cfg.seed);
    f.take("spin_hz", cfg.spin_hz);
    f.take("physics_hz", cfg.physics_hz);
    f.take("control_hz", cfg.control_hz);
    f.take("ideal_channel", cfg.ideal_channel);
    f.take("log_channel", cfg.log_channel);
    f.take("log_no_peer_variant", cfg.log_no_peer_variant);
    f.take("calibration_file", cfg.calibration_file);

    if (cfg.duration_s <= 0.0) fail(origin + ".duration_s", "must be positive");
    if (cfg.warmup_s < 0.0 || cfg.warmup_s >= cfg.duration_s)
        fail(origin + ".warmup_s", "must lie in [0, duration_s)");
    if (cfg.spin_hz <= 0.0) fail(origin + ".spin_hz", "must be positive");
    if (cfg.physics_hz < 1 || cfg.control_hz < 1 || cfg.physics_hz < cfg.control_hz)
        fail(origin + ".physics_hz", "need physics_hz >= control_hz >= 1");

    if (f.has("channel")) {
        Fields c(f.pop("channel"), origin + ".channel");
        c.take("max_range", cfg.channel.max_range);
        c.take("packet_loss_prob", cfg.channel.packet_loss_prob);
        c.take("crossing_jitter_sigma", cfg.channel.crossing_jitter_sigma);
        c.take("decode_jitter_tol_ns", cfg.channel.decode_jitter_tol);
        c.finish();
        if (cfg.channel.max_range <= 0.0)
            fail(origin + ".channel.max_range", "must be positive");
        if (cfg.channel.packet_loss_prob < 0.0 || cfg.channel.packet_loss_prob >= 1.0)
            fail(origin + ".channel.packet_loss_prob", "must lie in [0, 1)");
    }
    if (f.has("solver")) {
        Fields s(f.pop("solver"), origin + ".solver");
        s.take("max_iterations", cfg.solver.max_iterations);
        s.take("convergence_tol", cfg.solver.convergence_tol);
        s.take("initial_step", cfg.solver.initial_step);
        s.take("sigma_t", cfg.solver.sigma_t);
        s.take("min_neighbors_xy", cfg.solver.min_neighbors_xy);
        s.take("filter_tau", cfg.solver.filter_tau);
        s.finish();
        if (cfg.solver.min_neighbors_xy < 2)
            fail(origin + ".solver.min_neighbors_xy", "must be at least 2");
        if (cfg.solver.filter_tau <= 0.0)
            fail(origin + ".solver.filter_tau", "must be positive");
    }
    if (f.has("controller")) {
        Fields c(f.pop("controller"), origin + ".controller");
        c.take("kp", cfg.controller.kp);
        c.take("ki", cfg.controller.ki);
        c.take("kd", cfg.controller.kd);
        c.take("max_accel", cfg.controller.max_accel);
        c.take("integral_limit", cfg.controller.integral_limit);
        c.take("dropout_timeout_s", cfg.controller.dropout_timeout_s);
        c.finish();
        if (cfg.controller.max_accel <= 0.0)
            fail(origin + ".controller.max_accel", "must be positive");
    }
    if (f.has("geometry"))
        cfg.geometry = parse_geometry(f.pop("geometry"), origin + ".geometry", cfg.geometry);
    if (f.has("omega_drift")) {
        Fields d(f.pop("omega_drift"), origin + ".omega_drift");
        d.take("amplitude", cfg.omega_drift.amplitude);
        d.take("period_s", cfg.omega_drift.period_s);
        d.take("phase", cfg.omega_drift.phase);
        d.finish();
        if (cfg.omega_drift.period_s <= 0.0)
            fail(origin + ".omega_drift.period_s", "must be positive");
        if (std::abs(cfg.omega_drift.amplitude) >= 0.5)
            fail(origin + ".omega_drift.amplitude", "must stay below 0.5");
    }
    if (f.has("reference")) f.pop("reference");  // free-form, copied into summaries

    if (!f.has("robots")) fail(origin + ".robots", "missing");
    const json robots = f.pop("robots");
    if (!robots.is_array() || robots.empty())
        fail(origin + ".robots", "expected a non-empty array");
    std::set<int> ids;
    for (std::size_t i = 0; i < robots.size(); ++i) {
        const std::string rpath = origin + ".robots[" + std::to_string(i) + "]";
        RobotSpec spec = parse_robot(robots[i], rpath, cfg.geometry);
        if (!ids.insert(spec.id).second)
            fail(rpath + ".id", "duplicate robot id " + std::to_string(spec.id));
        cfg.robots.push_back(std::move(spec));
    }
    for (std::size_t i = 0; i < cfg.robots.size(); ++i) {
        if (!cfg.robots[i].allowed_peers) continue;
        for (int peer : *cfg.robots[i].allowed_peers)
            if (!ids.count(peer))
                fail(origin + ".robots[" + std::to_string(i) + "].allowed_peers",
                     "peer id " + std::to_string(peer) + " matches no robot");
    }
    f.finish();
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open");
    std::ostringstream text;
    text << f.rdbuf();
    return parse_scenario(text.str(), path);
}

std::string describe_scenario(const ScenarioConfig& cfg) {
    json j;
    j["schema_version"] = cfg.schema_version;
    j["duration_s"] = cfg.duration_s;
    j["warmup_s"] = cfg.warmup_s;
    j["seed"] = cfg.seed;
    j["spin_hz"] = cfg.spin_hz;
    j["physics_hz"] = cfg.physics_hz;
    j["control_hz"] = cfg.control_hz;
    j["ideal_channel"] = cfg.ideal_channel;
    j["log_channel"] = cfg.log_channel;
    j["log_no_peer_variant"] = cfg.log_no_peer_variant;
    j["calibration_file"] = cfg.calibration_file;
    j["channel"] = {{"max_range", cfg.channel.max_range},
                    {"packet_loss_prob", cfg.channel.packet_loss_prob},
                    {"crossing_jitter_sigma", cfg.channel.crossing_jitter_sigma},
                    {"decode_jitter_tol_ns", cfg.channel.decode_jitter_tol}};
    j["solver"] = {{"max_iterations", cfg.solver.max_iterations},
                   {"convergence_tol", cfg.solver.convergence_tol},
                   {"initial_step", cfg.solver.initial_step},
                   {"sigma_t", cfg.solver.sigma_t},
                   {"min_neighbors_xy", cfg.solver.min_neighbors_xy},
                   {"filter_tau", cfg.solver.filter_tau}};
    j["controller"] = {{"kp", cfg.controller.kp},
                       {"ki", cfg.controller.ki},
                       {"kd", cfg.controller.kd},
                       {"max_accel", cfg.controller.max_accel},
                       {"integral_limit", cfg.controller.integral_limit},
                       {"dropout_timeout_s", cfg.controller.dropout_timeout_s}};
    auto geometry_json = [](const GeometryParams& g) {
        return json{{"receiver_offset", g.receiver_offset},
                    {"phi_deg", rad_to_deg(g.phi)},
                    {"half_width_h_deg", rad_to_deg(g.half_width_h)},
                    {"half_width_v_deg", rad_to_deg(g.half_width_v)},
                    {"azimuth_mount_deg", rad_to_deg(g.azimuth_mount)},
                    {"top_elev_min_deg", rad_to_deg(g.top_elev_min)},
                    {"top_elev_max_deg", rad_to_deg(g.top_elev_max)},
                    {"bottom_elev_min_deg", rad_to_deg(g.bottom_elev_min)},
                    {"bottom_elev_max_deg", rad_to_deg(g.bottom_elev_max)},
                    {"z_offset_top", g.z_offset_top},
                    {"z_offset_bottom", g.z_offset_bottom},
                    {"body_radius", g.body_radius}};
    };
    j["geometry"] = geometry_json(cfg.geometry);
    j["omega_drift"] = {{"amplitude", cfg.omega_drift.amplitude},
                        {"period_s", cfg.omega_drift.period_s},
                        {"phase", cfg.omega_drift.phase}};
    j["robots"] = json::array();
    for (const auto& r : cfg.robots) {
        json rj;
        rj["id"] = r.id;
        rj["role"] = name(r.role);
        rj["position"] = {r.position.x, r.position.y, r.position.z};
        rj["spin_phase"] = r.spin_phase;
        if (!r.waypoints.empty()) {
            rj["waypoints"] = json::array();
            for (const auto& w : r.waypoints)
                rj["waypoints"].push_back(
                    {w.t_s, {w.pos.x, w.pos.y, w.pos.z}});
        }
        if (r.allowed_peers) rj["allowed_peers"] = *r.allowed_peers;
        if (r.geometry_override) rj["geometry"] = geometry_json(*r.geometry_override);
        j["robots"].push_back(rj);
    }
    return j.dump(2) + "\n";
}

}  // namespace spinloc
