#include "spinloc/simengine.hpp"

#include "spinloc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace spinloc {

const char* name(Role r) { return r == Role::Beacon ? "beacon" : "drone"; }

namespace {

enum class EventType { Physics, Control, Transmit, Solve };

struct Event {
    Ns time;
    std::uint64_t seq;
    EventType type;
    int robot;  // unused for global ticks
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
};

Vec3 clamp_norm(const Vec3& v, double limit) {
    const double n = v.norm();
    if (n <= limit || n == 0.0) return v;
    return v * (limit / n);
}

Vec3 target_at(const RobotSpec& spec, double t_s) {
    const auto& wp = spec.waypoints;
    if (wp.empty()) return spec.position;
    if (t_s <= wp.front().t_s) return wp.front().pos;
    for (std::size_t i = 1; i < wp.size(); ++i) {
        if (t_s <= wp[i].t_s) {
            const double span = wp[i].t_s - wp[i - 1].t_s;
            const double f = span > 0.0 ? (t_s - wp[i - 1].t_s) / span : 1.0;
            return wp[i - 1].pos + (wp[i].pos - wp[i - 1].pos) * f;
        }
    }
    return wp.back().pos;
}

struct RobotState {
    RobotSpec spec;
    RobotGeometry geometry;
    GeometryParams geometry_params;

    // truth
    Vec3 pos, vel;
    SpinState spin;

    // transmit side
    std::optional<AlohaScheduler> scheduler;
    std::vector<Packet> packets;
    std::size_t pkt_cursor = 0;

    // drone-only machinery
    std::array<ReceiverInbox, 3> inboxes;
    std::optional<TimingAccumulator> accumulator;
    MessageAssembler assembler;
    std::map<int, RelativeMeasurement> prev_meas;
    std::map<int, long> prev_pass;
    std::map<int, long> ideal_pass;
    double omega_est = 0.0;
    std::optional<PositionEstimate> last_solve;
    std::optional<Vec3> filtered;
    double z_est = 0.0;
    bool have_estimate = false;
    Ns last_solve_time = 0;
    Ns last_estimate_time = std::numeric_limits<Ns>::min();
    Vec3 vel_est;

    // no-peer estimator variant (diagnostic only; never drives anything)
    std::optional<PositionEstimate> np_last_solve;
    std::optional<Vec3> np_filtered;
    double np_z_est = 0.0;
    Ns np_last_solve_time = 0;

    // controller
    Vec3 integral;
    Vec3 acc_cmd;

    RobotCounters counters;
};

class Engine {
  public:
    Engine(const ScenarioConfig& cfg, const CalibrationTable& table)
        : cfg_(cfg), table_(table) {
        if (cfg_.robots.empty()) throw std::invalid_argument("scenario has no robots");
        omega0_ = kTwoPi * cfg_.spin_hz;
        period_ns_ = kTwoPi / omega0_ * 1e9;
        duration_ns_ = static_cast<Ns>(cfg_.duration_s * 1e9);
        if (table_.sigma_facing > 0.0) cfg_.solver.sigma_t = table_.sigma_facing;
        channel_.emplace(cfg_.channel, cfg_.seed);

        for (const auto& spec : cfg_.robots) {
            if (spec.id < 0 || spec.id > 63)
                throw std::invalid_argument("robot id must fit the 6-bit source field");
            auto [it, fresh] = robots_.emplace(spec.id, RobotState{});
            if (!fresh) throw std::invalid_argument("duplicate robot id");
            RobotState& r = it->second;
            r.spec = spec;
            r.geometry_params = spec.geometry_override.value_or(cfg_.geometry);
            r.geometry = make_geometry(r.geometry_params);
            r.pos = spec.position;
            r.spin = SpinState{r.pos, omega0_, 0, spec.spin_phase};
            r.omega_est = omega0_;
            if (spec.role == Role::Drone)
                r.accumulator.emplace(period_ns_ / 3.0);
        }
    }

    RunResult run() {
        schedule(0, EventType::Physics, -1);
        schedule(0, EventType::Control, -1);
        for (auto& [id, r] : robots_) {
            if (!cfg_.ideal_channel) {
                r.scheduler.emplace(Rng(cfg_.seed, 0xA10A, static_cast<std::uint64_t>(id)));
                rebuild_packets(r);
                schedule(r.scheduler->next_transmission_time(0), EventType::Transmit, id);
            }
            if (r.spec.role == Role::Drone) {
                r.last_solve_time = 0;
                schedule(static_cast<Ns>(period_ns_), EventType::Solve, id);
            }
        }
        log_truth(0);

        while (!queue_.empty()) {
            const Event ev = queue_.top();
            queue_.pop();
            if (ev.time > duration_ns_) break;
            switch (ev.type) {
                case EventType::Physics: on_physics(ev.time); break;
                case EventType::Control: on_control(ev.time); break;
                case EventType::Transmit: on_transmit(ev.time, ev.robot); break;
                case EventType::Solve: on_solve(ev.time, ev.robot); break;
            }
        }

        result_.duration_s = cfg_.duration_s;
        result_.warmup_s = cfg_.warmup_s;
        result_.spin_hz = cfg_.spin_hz;
        // the bottom emitter's final pulse is one slot wider than the top's
        long total_tx = 0;
        for (auto& [id, r] : robots_) {
            result_.robots[id] = r.counters;
            total_tx += r.counters.tx_packets;
        }
        const double on_ns_per_tx =
            kTopOnTimePerPacketNs + 0.5 * static_cast<double>(kSlotNs);
        result_.duty_cycle =
            cfg_.robots.empty() || duration_ns_ == 0
                ? 0.0
                : (total_tx * on_ns_per_tx) / (static_cast<double>(duration_ns_) * cfg_.robots.size());
        return std::move(result_);
    }

  private:
    void schedule(Ns t, EventType type, int robot) {
        queue_.push(Event{t, seq_++, type, robot});
    }

    double omega_truth(double t_ns) const {
        if (cfg_.omega_drift.amplitude == 0.0) return omega0_;
        return omega0_ * (1.0 + cfg_.omega_drift.amplitude *
                                    std::sin(kTwoPi * (t_ns * 1e-9) / cfg_.omega_drift.period_s +
                                             cfg_.omega_drift.phase));
    }

    void on_physics(Ns now) {
        const double dt = 1.0 / cfg_.physics_hz;
        if (now > 0) {
            for (auto& [id, r] : robots_) {
                if (r.spec.role == Role::Drone) {
                    r.vel += r.acc_cmd * dt;
                    r.pos += r.vel * dt;
                }
                const double phase = r.spin.phase_at(static_cast<double>(now));
                r.spin.center = r.pos;
                r.spin.phase_ref_time = now;
                r.spin.phase_at_ref = phase;
                r.spin.omega = omega_truth(static_cast<double>(now));
            }
            log_truth(now);
        }
        const Ns next = now + static_cast<Ns>(1e9 / cfg_.physics_hz);
        if (next <= duration_ns_) schedule(next, EventType::Physics, -1);
    }

    void log_truth(Ns now) {
        for (auto& [id, r] : robots_)
            if (r.spec.role == Role::Drone)
                result_.truth.push_back(TruthRow{now, id, r.pos});
    }

    void on_control(Ns now) {
        const double dt = 1.0 / cfg_.control_hz;
        const double t_s = now * 1e-9;
        for (auto& [id, r] : robots_) {
            if (r.spec.role != Role::Drone) continue;
            const bool fresh =
                r.have_estimate &&
                (now - r.last_estimate_time) * 1e-9 <= cfg_.controller.dropout_timeout_s;
            if (!fresh) {
                r.acc_cmd = {0, 0, 0};
                r.integral = {0, 0, 0};
                continue;
            }
            const Vec3 err = target_at(r.spec, t_s) - *r.filtered;
            r.integral += err * dt;
            r.integral = clamp_norm(r.integral, cfg_.controller.integral_limit);
            const Vec3 cmd = err * cfg_.controller.kp + r.integral * cfg_.controller.ki -
                             r.vel_est * cfg_.controller.kd;
            r.acc_cmd = clamp_norm(cmd, cfg_.controller.max_accel);
        }
        const Ns next = now + static_cast<Ns>(1e9 / cfg_.control_hz);
        if (next <= duration_ns_) schedule(next, EventType::Control, -1);
    }

    void rebuild_packets(RobotState& r) {
        const auto sid = static_cast<std::uint8_t>(r.spec.id);
        if (r.spec.role == Role::Beacon) {
            r.packets = position_packets(sid, r.spec.position);
            return;
        }
        Vec3 p = r.filtered.value_or(Vec3{0, 0, 0});
        p.x = std::clamp(p.x, -32.0, 32.0);
        p.y = std::clamp(p.y, -32.0, 32.0);
        p.z = std::clamp(p.z, -32.0, 32.0);
        std::optional<double> sigma;
        if (r.have_estimate && r.last_solve) sigma = r.last_solve->sigma_xy;
        r.packets = position_sigma_packets(sid, p, sigma);
    }

    int expected_packets(int source_id) const {
        auto it = robots_.find(source_id);
        if (it == robots_.end()) return 0;
        return it->second.spec.role == Role::Beacon ? 3 : 4;
    }

    bool allowed(const RobotState& rx, int tx_id) const {
        if (!rx.spec.allowed_peers) return true;
        const auto& peers = *rx.spec.allowed_peers;
        return std::find(peers.begin(), peers.end(), tx_id) != peers.end();
    }

    void on_transmit(Ns now, int robot) {
        RobotState& tx = robots_.at(robot);
        if (tx.pkt_cursor == 0) rebuild_packets(tx);  // message swaps on index wrap
        OutgoingPacket pkt{robot, tx.packets[tx.pkt_cursor], now, tx.pos};
        tx.pkt_cursor = (tx.pkt_cursor + 1) % tx.packets.size();
        ++tx.counters.tx_packets;

        receivers_.clear();
        rx_ids_.clear();
        for (auto& [id, r] : robots_) {
            if (r.spec.role != Role::Drone || id == robot) continue;
            if (!allowed(r, robot)) continue;
            receivers_.push_back(ReceiverRobot{id, r.spin, &r.geometry});
            rx_ids_.push_back(id);
        }
        auto candidates = channel_->deliver(pkt, receivers_, [](int, int) { return true; });
        for (auto& cand : candidates) {
            RobotState& rx = robots_.at(cand.rx_robot);
            rx.inboxes[static_cast<int>(cand.rx_id)].push(
                std::move(cand), cfg_.channel.decode_jitter_tol, pending_);
        }
        for (int id : rx_ids_) {
            RobotState& rx = robots_.at(id);
            for (auto& box : rx.inboxes)
                box.advance(now, cfg_.channel.decode_jitter_tol, pending_);
        }
        drain_pending(now);

        schedule(tx.scheduler->next_transmission_time(now), EventType::Transmit, robot);
    }

    void drain_pending(Ns now) {
        for (const auto& ev : pending_.decoded) {
            RobotState& rx = robots_.at(ev.receiver_robot_id);
            rx.accumulator->add(ev);
            rx.assembler.add(ev, expected_packets(ev.packet.source_id));
            ++rx.counters.rx_decoded;
            if (cfg_.log_channel)
                result_.channel.push_back(ChannelRow{ev.t_start, ev.receiver_robot_id,
                                                     ev.receiver_id, ev.packet.source_id,
                                                     ev.from_origin, true, LossCause::Collision});
        }
        for (const auto& loss : pending_.losses) {
            RobotState& rx = robots_.at(loss.rx_robot);
            ++rx.counters.rx_lost;
            if (cfg_.log_channel)
                result_.channel.push_back(ChannelRow{loss.t_start, loss.rx_robot, loss.rx_id,
                                                     loss.tx_robot, loss.origin, false,
                                                     loss.cause});
        }
        pending_.decoded.clear();
        pending_.losses.clear();
        if (now > last_expire_ + static_cast<Ns>(period_ns_)) {
            for (auto& [id, r] : robots_)
                if (r.spec.role == Role::Drone)
                    r.assembler.expire_partials_before(now - static_cast<Ns>(3 * period_ns_));
            last_expire_ = now;
        }
    }

    // Ideal mode: exact crossing times over the last solve window, no packets.
    std::vector<TimingRecord> ideal_records(RobotState& rx, Ns now) {
        std::vector<TimingRecord> records;
        const double w0 = static_cast<double>(rx.last_solve_time);
        const double w1 = static_cast<double>(now);
        for (auto& [id, other] : robots_) {
            if (id == rx.spec.id || !allowed(rx, id)) continue;
            Origin origin = Origin::Bottom;
            if (!transmitter_visible(other.geometry.tx(Origin::Bottom), other.pos, rx.pos,
                                     cfg_.channel.max_range)) {
                if (!transmitter_visible(other.geometry.tx(Origin::Top), other.pos, rx.pos,
                                         cfg_.channel.max_range))
                    continue;
                origin = Origin::Top;
            }
            const Vec3 tx_point = other.pos + Vec3{0, 0, other.geometry.tx(origin).z_offset};
            TimingRecord rec;
            rec.neighbor_id = id;
            rec.origin = origin;
            const auto seen = rx.ideal_pass.find(id);
            rec.pass_index = seen == rx.ideal_pass.end() ? 0 : seen->second + 1;
            bool any = false;
            for (ReceiverId rid :
                 {ReceiverId::Left, ReceiverId::Middle, ReceiverId::Right}) {
                const auto times =
                    mid_plane_crossing_times(rx.spin, rx.geometry.rx(rid), tx_point, w0, w1);
                if (times.empty()) continue;
                any = true;
                auto& slot = rid == ReceiverId::Left    ? rec.t_left
                             : rid == ReceiverId::Right ? rec.t_right
                                                        : rec.t_middle;
                slot = times.front();
            }
            if (!any) continue;
            rec.close_time = static_cast<double>(now);
            rx.ideal_pass[id] = rec.pass_index;
            records.push_back(rec);
        }
        return records;
    }

    struct MeasBatch {
        std::vector<FacingObservation> all;      // every usable neighbor
        std::vector<FacingObservation> beacons;  // excluding drone peers
    };

    MeasBatch gather(RobotState& rx, Ns now) {
        MeasBatch batch;
        std::vector<TimingRecord> records;
        if (cfg_.ideal_channel) {
            records = ideal_records(rx, now);
        } else {
            for (auto& box : rx.inboxes)
                box.advance(now, cfg_.channel.decode_jitter_tol, pending_);
            drain_pending(now);
            records = rx.accumulator->collect(static_cast<double>(now));
        }
        for (const auto& rec : records) {
            ++rx.counters.records;
            NeighborState nb;
            const auto other = robots_.find(rec.neighbor_id);
            if (other == robots_.end()) continue;
            if (cfg_.ideal_channel) {
                nb.position = other->second.pos;
                nb.decode_time = rec.close_time;
            } else {
                auto st = rx.assembler.latest(rec.neighbor_id);
                if (!st) {
                    ++rx.counters.skipped_no_state;
                    continue;
                }
                nb = *st;
            }
            RelativeMeasurement m;
            try {
                m = to_measurement(rec, table_, rx.omega_est, nb,
                                   other->second.geometry_params);
            } catch (const MeasurementError& e) {
                switch (e.kind()) {
                    case MeasurementErrorKind::StaleMessage:
                        ++rx.counters.skipped_stale;
                        break;
                    case MeasurementErrorKind::OutOfDomain:
                        ++rx.counters.skipped_out_of_domain;
                        break;
                    case MeasurementErrorKind::IncompleteTiming:
                        ++rx.counters.skipped_incomplete;
                        break;
                }
                continue;
            }
            ++rx.counters.measurements;

            const bool peer_drone = other->second.spec.role == Role::Drone;
            // a drone that has not yet localized broadcasts no sigma and
            // cannot serve as an anchor
            if (peer_drone && !cfg_.ideal_channel && !m.neighbor_sigma_xy) {
                ++rx.counters.skipped_unusable_peer;
                rx.prev_meas[rec.neighbor_id] = m;
                rx.prev_pass[rec.neighbor_id] = rec.pass_index;
                continue;
            }

            FacingObservation obs;
            obs.neighbor_id = rec.neighbor_id;
            obs.t_facing = m.t_facing;
            auto prev = rx.prev_meas.find(rec.neighbor_id);
            if (prev != rx.prev_meas.end() && rx.prev_pass[rec.neighbor_id] + 1 == rec.pass_index)
                obs.t_facing_prev = prev->second.t_facing;
            obs.range = m.range;
            obs.sigma_r = m.sigma_r;
            obs.alpha = m.alpha;
            obs.sigma_alpha = m.sigma_alpha;
            obs.neighbor_pos = m.neighbor_pos;
            obs.neighbor_sigma_xy = peer_drone ? m.neighbor_sigma_xy : std::nullopt;
            batch.all.push_back(obs);
            if (!peer_drone) batch.beacons.push_back(obs);

            rx.prev_meas[rec.neighbor_id] = m;
            rx.prev_pass[rec.neighbor_id] = rec.pass_index;
        }
        return batch;
    }

    struct SolveOutput {
        std::optional<PositionEstimate> estimate;
        double z = 0.0;
    };

    SolveOutput run_solvers(const std::vector<FacingObservation>& obs, double omega,
                            const PositionEstimate* warm, double prev_z,
                            RobotCounters& counters) {
        SolveOutput out;
        out.z = prev_z;
        try {
            PositionEstimate est = solve_xy(obs, omega, cfg_.solver, warm);
            try {
                out.z = solve_z(est.s, est.sigma_xy, obs);
            } catch (const SolveError&) {
                ++counters.no_elevation;
            }
            est.s.z = out.z;
            out.estimate = est;
        } catch (const SolveError& e) {
            if (e.kind() == SolveErrorKind::Underdetermined)
                ++counters.underdetermined;
            else if (e.kind() == SolveErrorKind::NoConvergence)
                ++counters.no_convergence;
        }
        return out;
    }

    void on_solve(Ns now, int robot) {
        RobotState& rx = robots_.at(robot);
        MeasBatch batch = gather(rx, now);

        double omega = rx.omega_est;
        try {
            omega = estimate_omega(batch.all);
        } catch (const SolveError&) {
            // keep the previous spin estimate until passes pair up
        }

        auto out = run_solvers(batch.all, omega,
                               rx.last_solve ? &*rx.last_solve : nullptr, rx.z_est,
                               rx.counters);
        if (out.estimate) {
            ++rx.counters.solves;
            if (rx.last_solve) {
                const auto flags = check_assumptions(*rx.last_solve, *out.estimate);
                if (flags.omega_drift) ++rx.counters.omega_warnings;
                if (flags.position_jump) ++rx.counters.position_warnings;
            }
            const double dt_s =
                rx.have_estimate ? (now - rx.last_estimate_time) * 1e-9 : 0.0;
            const Vec3 prev_filtered = rx.filtered.value_or(out.estimate->s);
            rx.filtered = filter_estimate(rx.filtered, out.estimate->s, dt_s,
                                          cfg_.solver.filter_tau);
            if (rx.have_estimate && dt_s > 0.0)
                rx.vel_est = (*rx.filtered - prev_filtered) * (1.0 / dt_s);
            rx.z_est = out.z;
            rx.last_solve = out.estimate;
            rx.last_estimate_time = now;
            rx.have_estimate = true;
            result_.estimates.push_back(EstimateRow{now, robot, *rx.filtered,
                                                    out.estimate->sigma_xy, omega,
                                                    out.estimate->n_neighbors});
        }
        rx.omega_est = omega;

        if (cfg_.log_no_peer_variant && rx.spec.role == Role::Drone) {
            RobotCounters scratch;
            auto np = run_solvers(batch.beacons, omega,
                                  rx.np_last_solve ? &*rx.np_last_solve : nullptr,
                                  rx.np_z_est, scratch);
            if (np.estimate) {
                const double dt_s = (now - rx.np_last_solve_time) * 1e-9;
                rx.np_filtered = filter_estimate(rx.np_filtered, np.estimate->s, dt_s,
                                                 cfg_.solver.filter_tau);
                rx.np_z_est = np.z;
                rx.np_last_solve = np.estimate;
                rx.np_last_solve_time = now;
                result_.estimates_no_peer.push_back(
                    EstimateRow{now, robot, *rx.np_filtered, np.estimate->sigma_xy, omega,
                                np.estimate->n_neighbors});
            }
        }

        rx.last_solve_time = now;
        const Ns next = now + static_cast<Ns>(kTwoPi / omega * 1e9);
        if (next <= duration_ns_) schedule(next, EventType::Solve, robot);
    }

    ScenarioConfig cfg_;
    CalibrationTable table_;
    double omega0_ = 0.0;
    double period_ns_ = 0.0;
    Ns duration_ns_ = 0;
    Ns last_expire_ = 0;
    std::optional<Channel> channel_;
    std::map<int, RobotState> robots_;
    std::priority_queue<Event, std::vector<Event>, EventLater> queue_;
    std::uint64_t seq_ = 0;
    ResolveResult pending_;
    std::vector<ReceiverRobot> receivers_;
    std::vector<int> rx_ids_;
    RunResult result_;
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Writes via a temporary so a re-run replaces each file atomically.
template <typename Fn>
void atomic_write(const std::filesystem::path& path, Fn&& fill) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        fill(f);
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json stats_json(const AxisStats& st, std::size_t samples) {
    nlohmann::json j;
    j["rmse_mm"] = {st.rmse.x * 1e3, st.rmse.y * 1e3, st.rmse.z * 1e3};
    j["stddev_mm"] = {st.stddev.x * 1e3, st.stddev.y * 1e3, st.stddev.z * 1e3};
    j["mean_mm"] = {st.mean.x * 1e3, st.mean.y * 1e3, st.mean.z * 1e3};
    j["rmse_xy_mm"] = st.rmse_xy * 1e3;
    j["rmse_3d_mm"] = st.rmse_3d * 1e3;
    j["max_xy_mm"] = st.max_xy * 1e3;
    j["samples"] = samples;
    return j;
}

nlohmann::json error_summary(const std::vector<EstimateRow>& estimates,
                             const RunResult& result) {
    nlohmann::json out = nlohmann::json::object();
    std::set<int> drones;
    for (const auto& row : estimates) drones.insert(row.robot);
    for (int id : drones) {
        const auto series = error_series(estimates, result.truth, id, result.warmup_s);
        if (series.e.empty()) continue;
        out[std::to_string(id)] = stats_json(error_stats(series), series.e.size());
    }
    return out;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& config, const CalibrationTable& table) {
    Engine engine(config, table);
    return engine.run();
}

void write_run_outputs(const RunResult& result, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    atomic_write(fs::path(dir) / "truth.csv", [&](std::ostream& f) {
        f << "time_ns,robot,x,y,z\n";
        for (const auto& row : result.truth)
            f << row.time << ',' << row.robot << ',' << fmt_double(row.pos.x) << ','
              << fmt_double(row.pos.y) << ',' << fmt_double(row.pos.z) << '\n';
    });
    auto write_estimates = [&](const std::vector<EstimateRow>& rows, const char* file) {
        atomic_write(fs::path(dir) / file, [&](std::ostream& f) {
            f << "time_ns,robot,s_x,s_y,s_z,sigma_xy,omega,n_neighbors\n";
            for (const auto& row : rows)
                f << row.time << ',' << row.robot << ',' << fmt_double(row.s.x) << ','
                  << fmt_double(row.s.y) << ',' << fmt_double(row.s.z) << ','
                  << fmt_double(row.sigma_xy) << ',' << fmt_double(row.omega) << ','
                  << row.n_neighbors << '\n';
        });
    };
    write_estimates(result.estimates, "estimates.csv");
    if (!result.estimates_no_peer.empty())
        write_estimates(result.estimates_no_peer, "estimates_no_peer.csv");

    if (!result.channel.empty()) {
        atomic_write(fs::path(dir) / "channel.csv", [&](std::ostream& f) {
            f << "time_ns,rx_robot,rx_id,tx_robot,origin,outcome,cause\n";
            for (const auto& row : result.channel)
                f << row.time << ',' << row.rx_robot << ',' << name(row.rx_id) << ','
                  << row.tx_robot << ',' << name(row.origin) << ','
                  << (row.decoded ? "decoded" : "lost") << ','
                  << (row.decoded ? "" : name(row.cause)) << '\n';
        });
    }

    nlohmann::json summary;
    summary["duration_s"] = result.duration_s;
    summary["warmup_s"] = result.warmup_s;
    summary["spin_hz"] = result.spin_hz;
    summary["duty_cycle"] = result.duty_cycle;
    nlohmann::json robots = nlohmann::json::object();
    for (const auto& [id, c] : result.robots) {
        nlohmann::json r;
        r["tx_packets"] = c.tx_packets;
        r["rx_decoded"] = c.rx_decoded;
        r["rx_lost"] = c.rx_lost;
        r["records"] = c.records;
        r["measurements"] = c.measurements;
        r["skipped_no_state"] = c.skipped_no_state;
        r["skipped_stale"] = c.skipped_stale;
        r["skipped_out_of_domain"] = c.skipped_out_of_domain;
        r["skipped_incomplete"] = c.skipped_incomplete;
        r["skipped_unusable_peer"] = c.skipped_unusable_peer;
        r["solves"] = c.solves;
        r["underdetermined"] = c.underdetermined;
        r["no_convergence"] = c.no_convergence;
        r["no_elevation"] = c.no_elevation;
        r["omega_warnings"] = c.omega_warnings;
        r["position_warnings"] = c.position_warnings;
        robots[std::to_string(id)] = r;
    }
    summary["robots"] = robots;

    summary["errors"] = error_summary(result.estimates, result);
    if (!result.estimates_no_peer.empty())
        summary["errors_no_peer"] = error_summary(result.estimates_no_peer, result);
    if (!result.channel.empty()) {
        const auto st = channel_stats(result.channel);
        summary["channel"] = {{"decoded", st.decoded_total},
                              {"lost", st.lost_total},
                              {"collision_rate", st.collision_rate}};
    }

    atomic_write(fs::path(dir) / "summary.json",
                 [&](std::ostream& f) { f << summary.dump(2) << '\n'; });
}

}  // namespace spinloc
