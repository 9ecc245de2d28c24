#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spinloc/channel.hpp"
#include "spinloc/geometry.hpp"
#include "spinloc/localization.hpp"
#include "spinloc/sensing.hpp"
#include "spinloc/types.hpp"
#include "spinloc/vec3.hpp"

namespace spinloc {

enum class Role { Beacon, Drone };
const char* name(Role r);

struct Waypoint {
    double t_s = 0.0;
    Vec3 pos;
};

struct RobotSpec {
    int id = 0;
    Role role = Role::Beacon;
    Vec3 position;
    double spin_phase = 0.0;  // rad at t = 0
    std::vector<Waypoint> waypoints;          // drone target track, piecewise linear
    std::optional<std::vector<int>> allowed_peers;  // sources this robot listens to
    std::optional<GeometryParams> geometry_override;
};

struct ControllerConfig {
    double kp = 9.0;
    double ki = 1.0;
    double kd = 5.4;
    double max_accel = 3.0;          // m/s^2
    double integral_limit = 0.5;     // m*s
    double dropout_timeout_s = 0.2;  // zero the command when estimates stop
};

struct OmegaDrift {
    double amplitude = 0.0;  // relative, omega = omega0 * (1 + a*sin(...))
    double period_s = 10.0;
    double phase = 0.0;
};

struct ScenarioConfig {
    int schema_version = 1;
    double duration_s = 10.0;
    double warmup_s = 2.0;
    std::uint64_t seed = 1;
    double spin_hz = 25.0;
    int physics_hz = 1000;
    int control_hz = 100;
    bool ideal_channel = false;
    bool log_channel = false;
    bool log_no_peer_variant = false;
    ChannelConfig channel;
    SolverConfig solver;
    ControllerConfig controller;
    GeometryParams geometry;
    OmegaDrift omega_drift;
    std::string calibration_file;  // resolved by the caller; empty = analytic table
    std::vector<RobotSpec> robots;
};

struct TruthRow {
    Ns time = 0;
    int robot = 0;
    Vec3 pos;
};

struct EstimateRow {
    Ns time = 0;
    int robot = 0;
    Vec3 s;
    double sigma_xy = 0.0;
    double omega = 0.0;
    int n_neighbors = 0;
};

struct ChannelRow {
    Ns time = 0;
    int rx_robot = 0;
    ReceiverId rx_id = ReceiverId::Left;
    int tx_robot = 0;
    Origin origin = Origin::Top;
    bool decoded = false;
    LossCause cause = LossCause::Collision;  // valid when !decoded
};

struct RobotCounters {
    long tx_packets = 0;
    long rx_decoded = 0;
    long rx_lost = 0;
    long records = 0;
    long measurements = 0;
    long skipped_no_state = 0;
    long skipped_stale = 0;
    long skipped_out_of_domain = 0;
    long skipped_incomplete = 0;
    long skipped_unusable_peer = 0;
    long solves = 0;
    long underdetermined = 0;
    long no_convergence = 0;
    long no_elevation = 0;
    long omega_warnings = 0;
    long position_warnings = 0;
};

struct RunResult {
    std::vector<TruthRow> truth;
    std::vector<EstimateRow> estimates;
    std::vector<EstimateRow> estimates_no_peer;
    std::vector<ChannelRow> channel;
    std::map<int, RobotCounters> robots;
    double duration_s = 0.0;
    double warmup_s = 0.0;
    double spin_hz = 25.0;
    // transmitter duty cycle: LED on-time fraction, averaged over both origins
    double duty_cycle = 0.0;
};

RunResult run_scenario(const ScenarioConfig& config, const CalibrationTable& table);

// Writes truth.csv, estimates.csv, channel.csv (when logged), summary.json
// and, when present, estimates_no_peer.csv into directory `dir` with stable
// %.9g float formatting. Creates the directory if needed.
void write_run_outputs(const RunResult& result, const std::string& dir);

}  // namespace spinloc
