#include "spinloc/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace spinloc {

namespace {

int rx_index(ReceiverId id) { return static_cast<int>(id); }
int origin_index(Origin o) { return o == Origin::Top ? 0 : 1; }

}  // namespace

void TimingAccumulator::add(const ReceptionEvent& reception) {
    add(reception.packet.source_id, reception.receiver_id, reception.from_origin,
        static_cast<double>(reception.t_start));
}

void TimingAccumulator::add(int neighbor_id, ReceiverId receiver, Origin origin,
                            double t_start_ns) {
    auto it = open_.find(neighbor_id);
    if (it != open_.end() && t_start_ns - it->second.last_activity > close_gap_) {
        ready_.push_back(finalize(neighbor_id, it->second));
        open_.erase(it);
        it = open_.end();
    }
    if (it == open_.end())
        it = open_.emplace(neighbor_id, Pass{}).first;

    Pass& pass = it->second;
    auto& slot = pass.first[origin_index(origin)][rx_index(receiver)];
    if (!slot || t_start_ns < *slot) slot = t_start_ns;
    pass.last_activity = std::max(pass.last_activity, t_start_ns);
}

std::vector<TimingRecord> TimingAccumulator::collect(double now_ns) {
    for (auto it = open_.begin(); it != open_.end();) {
        if (now_ns - it->second.last_activity > close_gap_) {
            ready_.push_back(finalize(it->first, it->second));
            it = open_.erase(it);
        } else {
            ++it;
        }
    }
    std::sort(ready_.begin(), ready_.end(), [](const auto& a, const auto& b) {
        return a.close_time != b.close_time ? a.close_time < b.close_time
                                            : a.neighbor_id < b.neighbor_id;
    });
    std::vector<TimingRecord> out;
    out.swap(ready_);
    return out;
}

std::vector<TimingRecord> TimingAccumulator::flush() {
    return collect(std::numeric_limits<double>::infinity());
}

TimingRecord TimingAccumulator::finalize(int neighbor_id, const Pass& pass) {
    int counts[2] = {0, 0};
    for (int o = 0; o < 2; ++o)
        for (int r = 0; r < 3; ++r)
            if (pass.first[o][r]) ++counts[o];

    TimingRecord rec;
    rec.neighbor_id = neighbor_id;
    rec.pass_index = pass_counts_[neighbor_id]++;
    rec.origin = counts[1] >= counts[0] ? Origin::Bottom : Origin::Top;
    const int o = origin_index(rec.origin);
    rec.t_left = pass.first[o][rx_index(ReceiverId::Left)];
    rec.t_middle = pass.first[o][rx_index(ReceiverId::Middle)];
    rec.t_right = pass.first[o][rx_index(ReceiverId::Right)];
    rec.close_time = pass.last_activity;
    return rec;
}

void MessageAssembler::add(const ReceptionEvent& reception, int expected_packets) {
    const Packet& p = reception.packet;
    const auto key = std::make_pair(static_cast<int>(p.source_id), p.msg_crc);
    Partial& partial = partials_[key];
    partial.by_index.emplace(p.packet_index, p);
    partial.last_activity =
        std::max(partial.last_activity, static_cast<double>(reception.t_start));
    if (static_cast<int>(partial.by_index.size()) < expected_packets) return;

    std::vector<Packet> packets;
    packets.reserve(partial.by_index.size());
    for (const auto& [idx, pkt] : partial.by_index) packets.push_back(pkt);
    const double t = partial.last_activity;
    partials_.erase(key);

    auto assembled = assemble_message(packets, expected_packets);
    if (std::holds_alternative<AssembleError>(assembled)) return;
    const Message& m = std::get<Message>(assembled);

    NeighborState state;
    state.decode_time = t;
    if (expected_packets >= 4 && m.bytes.size() >= 8) {
        auto [pos, sigma] = decode_position_sigma(m.bytes.data());
        state.position = pos;
        state.sigma_xy = sigma;
    } else if (m.bytes.size() >= 6) {
        state.position = decode_position(m.bytes.data());
    } else {
        return;
    }
    states_[m.source_id] = state;
}

std::optional<NeighborState> MessageAssembler::latest(int neighbor_id) const {
    auto it = states_.find(neighbor_id);
    if (it == states_.end()) return std::nullopt;
    return it->second;
}

void MessageAssembler::expire_partials_before(double t_ns) {
    for (auto it = partials_.begin(); it != partials_.end();) {
        if (it->second.last_activity < t_ns)
            it = partials_.erase(it);
        else
            ++it;
    }
}

IdealRelative ideal_relative(double t_left_ns, std::optional<double> t_middle_ns,
                             double t_right_ns, double omega,
                             double receiver_offset, double phi) {
    const double half = omega * (t_right_ns - t_left_ns) * 1e-9 / 2.0;
    if (!(half > 0.0) || !(half < kPi))
        throw DomainError("side-crossing separation outside one revolution");
    IdealRelative out;
    out.range = receiver_offset / std::sin(half);
    if (t_middle_ns) {
        const double delta =
            omega * (*t_middle_ns - (t_left_ns + t_right_ns) / 2.0) * 1e-9;
        out.alpha = std::atan(std::sin(delta) / std::tan(phi));
    }
    return out;
}

Uncertainty propagate_uncertainty(double range, double alpha, double omega,
                                  double receiver_offset, double phi,
                                  double sigma_t) {
    Uncertainty u;
    u.sigma_r = range * range * omega * sigma_t / (std::sqrt(2.0) * receiver_offset);
    const double cos_a = std::cos(alpha);
    u.sigma_alpha = cos_a * cos_a * omega * sigma_t / std::tan(phi);
    u.sigma_theta = omega * sigma_t / std::sqrt(2.0);
    return u;
}

std::string CalibrationTable::to_json() const {
    nlohmann::json j{{"schema_version", schema_version},
                     {"r_eff", r_eff},
                     {"c0", c0},
                     {"alpha_k", alpha_k},
                     {"c1", c1},
                     {"sigma_r_coeff", sigma_r_coeff},
                     {"sigma_r_exp", sigma_r_exp},
                     {"sigma_alpha_coeff", sigma_alpha_coeff},
                     {"sigma_facing", sigma_facing},
                     {"x_min", x_min},
                     {"x_max", x_max},
                     {"delta_min", delta_min},
                     {"delta_max", delta_max},
                     {"residual_r_rms", residual_r_rms},
                     {"residual_alpha_rms", residual_alpha_rms}};
    return j.dump(2);
}

CalibrationTable CalibrationTable::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema_version").get<int>() != 1)
        throw std::runtime_error("unsupported calibration schema version");
    CalibrationTable t;
    t.r_eff = j.at("r_eff").get<double>();
    t.c0 = j.at("c0").get<double>();
    t.alpha_k = j.at("alpha_k").get<double>();
    t.c1 = j.at("c1").get<double>();
    t.sigma_r_coeff = j.at("sigma_r_coeff").get<double>();
    t.sigma_r_exp = j.at("sigma_r_exp").get<double>();
    t.sigma_alpha_coeff = j.at("sigma_alpha_coeff").get<double>();
    t.sigma_facing = j.at("sigma_facing").get<double>();
    t.x_min = j.at("x_min").get<double>();
    t.x_max = j.at("x_max").get<double>();
    t.delta_min = j.at("delta_min").get<double>();
    t.delta_max = j.at("delta_max").get<double>();
    t.residual_r_rms = j.at("residual_r_rms").get<double>();
    t.residual_alpha_rms = j.at("residual_alpha_rms").get<double>();
    return t;
}

CalibrationTable CalibrationTable::ideal(double receiver_offset, double phi,
                                         double omega, double sigma_t) {
    CalibrationTable t;
    t.r_eff = receiver_offset;
    t.c0 = 0.0;
    t.alpha_k = 1.0 / std::tan(phi);
    t.c1 = 0.0;
    t.sigma_r_coeff = omega * sigma_t / (std::sqrt(2.0) * receiver_offset);
    t.sigma_r_exp = 2.0;
    t.sigma_alpha_coeff = omega * sigma_t / std::tan(phi);
    t.sigma_facing = sigma_t / std::sqrt(2.0);
    return t;
}

namespace {

// Bounded scalar minimization; f must be unimodal on [a, b].
template <typename F>
double golden_min(F&& f, double a, double b, int iterations = 90) {
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iterations; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return (a + b) / 2.0;
}

struct PointSamples {
    double r_true = 0.0;
    double alpha_true_deg = 0.0;       // of the reference point, for reporting
    std::vector<double> x;             // omega * (t_R - t_L)
    std::vector<double> delta;         // omega * (t_M - t_facing)
    std::vector<double> delta_alpha_true;  // true elevation per delta sample
    std::vector<double> facing_err_s;
};

// One grid point: a static beacon transmitting its position over the real
// channel while the receiver spins.
void run_channel_point(const CalibrateConfig& cfg, const RobotGeometry& geom,
                       const Vec3& beacon_pos, int point_id,
                       TimingAccumulator& acc) {
    const double omega = kTwoPi * cfg.spin_hz;
    const Ns duration =
        static_cast<Ns>(cfg.revolutions_per_point * kTwoPi / omega * 1e9);

    std::vector<ReceiverRobot> receivers(1);
    receivers[0].robot_id = 0;
    receivers[0].spin = SpinState{{0, 0, 0}, omega, 0, 0.0};
    receivers[0].geometry = &geom;

    Channel channel(cfg.channel, cfg.seed + 0x9E3779B97F4A7C15ull * (point_id + 1));
    AlohaScheduler sched(Rng(cfg.seed, 0xCA11, static_cast<std::uint64_t>(point_id)));
    const auto packets = position_packets(1, beacon_pos);
    ReceiverInbox inbox[3];
    ResolveResult result;
    auto allow_all = [](int, int) { return true; };

    std::size_t pkt_idx = 0;
    for (Ns t = sched.next_transmission_time(0); t < duration;
         t = sched.next_transmission_time(t)) {
        OutgoingPacket pkt{1, packets[pkt_idx++ % packets.size()], t, beacon_pos};
        for (auto& cand : channel.deliver(pkt, receivers, allow_all)) {
            const int rx = rx_index(cand.rx_id);
            inbox[rx].push(std::move(cand), cfg.channel.decode_jitter_tol, result);
        }
        for (auto& box : inbox)
            box.advance(t, cfg.channel.decode_jitter_tol, result);
    }
    for (auto& box : inbox) box.flush(result, cfg.channel.decode_jitter_tol);
    for (const auto& ev : result.decoded) acc.add(ev);
}

// Ideal-channel variant: exact mid-surface crossing times, no transmission.
void run_ideal_point(const CalibrateConfig& cfg, const RobotGeometry& geom,
                     const Vec3& beacon_pos, TimingAccumulator& acc) {
    const double omega = kTwoPi * cfg.spin_hz;
    const double period_ns = kTwoPi / omega * 1e9;
    const SpinState spin{{0, 0, 0}, omega, 0, 0.0};

    Origin origin = Origin::Bottom;
    if (!transmitter_visible(geom.tx(Origin::Bottom), beacon_pos, spin.center,
                             cfg.channel.max_range)) {
        if (!transmitter_visible(geom.tx(Origin::Top), beacon_pos, spin.center,
                                 cfg.channel.max_range))
            return;
        origin = Origin::Top;
    }
    const Vec3 tx_point = beacon_pos + Vec3{0, 0, geom.tx(origin).z_offset};

    for (int rev = 0; rev < cfg.revolutions_per_point; ++rev) {
        const double w0 = rev * period_ns, w1 = (rev + 1) * period_ns;
        for (ReceiverId id : {ReceiverId::Left, ReceiverId::Middle, ReceiverId::Right}) {
            const auto times = mid_plane_crossing_times(spin, geom.rx(id), tx_point, w0, w1);
            for (double t : times) acc.add(1, id, origin, t);
        }
    }
}

struct LinearFit {
    double scale = 0.0;   // closed-form amplitude at the best offset
    double offset = 0.0;  // golden-section result
};

}  // namespace

CalibrationOutcome calibrate(const CalibrateConfig& cfg) {
    const RobotGeometry geom = make_geometry(cfg.geometry);
    const double omega = kTwoPi * cfg.spin_hz;
    const double period_ns = kTwoPi / omega * 1e9;
    const double beta = kPi / 2.0;  // beacon azimuth from the receiver

    std::vector<PointSamples> points;
    points.reserve(cfg.r_steps * cfg.alpha_steps);

    int point_id = 0;
    for (int i = 0; i < cfg.r_steps; ++i) {
        const double r_true =
            cfg.r_min + (cfg.r_max - cfg.r_min) * (cfg.r_steps == 1 ? 0.5 : double(i) / (cfg.r_steps - 1));
        for (int j = 0; j < cfg.alpha_steps; ++j, ++point_id) {
            const double alpha_deg =
                cfg.alpha_min_deg + (cfg.alpha_max_deg - cfg.alpha_min_deg) *
                                        (cfg.alpha_steps == 1 ? 0.5 : double(j) / (cfg.alpha_steps - 1));
            const Vec3 beacon_pos{0.0, r_true, r_true * std::tan(deg_to_rad(alpha_deg))};

            TimingAccumulator acc(period_ns / 3.0);
            if (cfg.ideal_channel)
                run_ideal_point(cfg, geom, beacon_pos, acc);
            else
                run_channel_point(cfg, geom, beacon_pos, point_id, acc);

            PointSamples samples;
            samples.r_true = r_true;
            samples.alpha_true_deg = alpha_deg;
            for (const auto& rec : acc.flush()) {
                if (!rec.has_range()) continue;
                const double t_facing = (*rec.t_left + *rec.t_right) / 2.0;
                samples.x.push_back(omega * (*rec.t_right - *rec.t_left) * 1e-9);
                const double tx_z =
                    beacon_pos.z + geom.tx(rec.origin).z_offset;
                if (rec.t_middle) {
                    samples.delta.push_back(omega * (*rec.t_middle - t_facing) * 1e-9);
                    samples.delta_alpha_true.push_back(std::atan2(tx_z, r_true));
                }
                // True facing time: nearest time the facing angle equals beta.
                const double phase = omega * t_facing * 1e-9;
                const double err = wrap_pi(phase - beta) / omega;
                samples.facing_err_s.push_back(err);
            }
            if (!samples.x.empty()) points.push_back(std::move(samples));
        }
    }

    if (points.empty()) throw FitDomainError("calibration sweep produced no samples");

    // Range map: golden-section on the phase offset with the closed-form
    // amplitude r_eff(c0) = sum(r * u) / sum(u^2), u = 1/sin(x/2 + c0).
    auto range_sse = [&](double c0, double* r_eff_out) {
        double su2 = 0.0, sru = 0.0;
        for (const auto& p : points)
            for (double x : p.x) {
                const double arg = x / 2.0 + c0;
                if (arg <= 1e-6 || arg >= kPi - 1e-6) return 1e300;
                const double u = 1.0 / std::sin(arg);
                su2 += u * u;
                sru += p.r_true * u;
            }
        const double r_eff = sru / su2;
        if (r_eff_out) *r_eff_out = r_eff;
        double sse = 0.0;
        for (const auto& p : points)
            for (double x : p.x) {
                const double d = r_eff / std::sin(x / 2.0 + c0) - p.r_true;
                sse += d * d;
            }
        return sse;
    };
    LinearFit range_fit;
    range_fit.offset = golden_min([&](double c) { return range_sse(c, nullptr); }, -0.1, 0.1);
    range_sse(range_fit.offset, &range_fit.scale);

    // Elevation map: same structure, k(c1) = sum(tan(a) * s) / sum(s^2),
    // s = sin(delta + c1).
    bool have_alpha = false;
    for (const auto& p : points) have_alpha = have_alpha || !p.delta.empty();
    LinearFit alpha_fit{1.0 / std::tan(cfg.geometry.phi), 0.0};
    if (have_alpha) {
        auto alpha_sse = [&](double c1, double* k_out) {
            double ss2 = 0.0, sts = 0.0;
            for (const auto& p : points)
                for (std::size_t n = 0; n < p.delta.size(); ++n) {
                    const double s = std::sin(p.delta[n] + c1);
                    ss2 += s * s;
                    sts += std::tan(p.delta_alpha_true[n]) * s;
                }
            if (ss2 <= 0.0) return 1e300;
            const double k = sts / ss2;
            if (k_out) *k_out = k;
            double sse = 0.0;
            for (const auto& p : points)
                for (std::size_t n = 0; n < p.delta.size(); ++n) {
                    const double d = std::atan(k * std::sin(p.delta[n] + c1)) -
                                     p.delta_alpha_true[n];
                    sse += d * d;
                }
            return sse;
        };
        alpha_fit.offset = golden_min([&](double c) { return alpha_sse(c, nullptr); }, -0.1, 0.1);
        alpha_sse(alpha_fit.offset, &alpha_fit.scale);
    }

    CalibrationOutcome out;
    CalibrationTable& table = out.table;
    table.r_eff = range_fit.scale;
    table.c0 = range_fit.offset;
    table.alpha_k = alpha_fit.scale;
    table.c1 = alpha_fit.offset;

    double x_lo = 1e300, x_hi = -1e300, d_lo = 1e300, d_hi = -1e300;
    double facing_sum = 0.0, facing_ss = 0.0;
    std::size_t facing_n = 0;
    double resid_r_ss = 0.0, resid_a_ss = 0.0;
    std::size_t resid_r_n = 0, resid_a_n = 0;
    std::vector<std::pair<double, double>> log_sigma_r;  // (log r, log std)
    std::vector<std::pair<double, double>> sigma_alpha_pts;  // (cos^2 a, std)

    const double r_step =
        cfg.r_steps > 1 ? (cfg.r_max - cfg.r_min) / (cfg.r_steps - 1) : cfg.r_max - cfg.r_min;
    for (const auto& p : points) {
        CalibrationPointStats stats;
        stats.r_true = p.r_true;
        stats.alpha_true_deg = p.alpha_true_deg;
        stats.samples = static_cast<int>(p.x.size());

        double sum = 0.0, sum2 = 0.0;
        for (double x : p.x) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            const double r_hat = table.r_eff / std::sin(x / 2.0 + table.c0);
            sum += r_hat;
            sum2 += r_hat * r_hat;
        }
        stats.r_mean = sum / p.x.size();
        stats.r_std = p.x.size() > 1
                          ? std::sqrt(std::max(0.0, (sum2 - sum * sum / p.x.size()) /
                                                        (p.x.size() - 1)))
                          : 0.0;

        if (!p.delta.empty()) {
            double asum = 0.0, asum2 = 0.0, atrue = 0.0;
            for (std::size_t n = 0; n < p.delta.size(); ++n) {
                d_lo = std::min(d_lo, p.delta[n]);
                d_hi = std::max(d_hi, p.delta[n]);
                const double a_hat =
                    std::atan(table.alpha_k * std::sin(p.delta[n] + table.c1));
                asum += a_hat;
                asum2 += a_hat * a_hat;
                atrue += p.delta_alpha_true[n];
            }
            stats.alpha_mean = asum / p.delta.size();
            stats.alpha_std =
                p.delta.size() > 1
                    ? std::sqrt(std::max(0.0, (asum2 - asum * asum / p.delta.size()) /
                                                  (p.delta.size() - 1)))
                    : 0.0;
            atrue /= p.delta.size();
            resid_a_ss += (stats.alpha_mean - atrue) * (stats.alpha_mean - atrue);
            ++resid_a_n;
            if (stats.samples >= 8 && stats.alpha_std > 0.0) {
                const double c = std::cos(atrue);
                sigma_alpha_pts.emplace_back(c * c, stats.alpha_std);
            }
        }

        for (double e : p.facing_err_s) {
            facing_sum += e;
            facing_ss += e * e;
            ++facing_n;
        }
        if (std::abs(p.r_true - 0.3) <= r_step * 0.75) {
            resid_r_ss += (stats.r_mean - p.r_true) * (stats.r_mean - p.r_true);
            ++resid_r_n;
        }
        if (stats.samples >= 8 && stats.r_std > 0.0)
            log_sigma_r.emplace_back(std::log(p.r_true), std::log(stats.r_std));
        out.points.push_back(stats);
    }

    table.x_min = x_lo * 0.98;
    table.x_max = x_hi * 1.02;
    if (d_hi >= d_lo) {
        table.delta_min = d_lo - 0.02;
        table.delta_max = d_hi + 0.02;
    }

    // Noise maps from per-point scatter; a perfectly clean sweep keeps small
    // positive floors so downstream weights stay finite.
    if (log_sigma_r.size() >= 3) {
        double mx = 0.0, my = 0.0;
        for (auto& [lx, ly] : log_sigma_r) {
            mx += lx;
            my += ly;
        }
        mx /= log_sigma_r.size();
        my /= log_sigma_r.size();
        double sxx = 0.0, sxy = 0.0;
        for (auto& [lx, ly] : log_sigma_r) {
            sxx += (lx - mx) * (lx - mx);
            sxy += (lx - mx) * (ly - my);
        }
        table.sigma_r_exp = sxy / sxx;
        table.sigma_r_coeff = std::exp(my - table.sigma_r_exp * mx);
    } else {
        table.sigma_r_coeff = 1e-6;
        table.sigma_r_exp = 2.0;
    }
    if (!sigma_alpha_pts.empty()) {
        double num = 0.0, den = 0.0;
        for (auto& [c2, s] : sigma_alpha_pts) {
            num += s * c2;
            den += c2 * c2;
        }
        table.sigma_alpha_coeff = num / den;
    } else {
        table.sigma_alpha_coeff = 1e-6;
    }
    // Scatter about the mean: the constant reception-lead bias is common to
    // both side receivers and lands in the solver's facing-phase parameter.
    if (facing_n > 1) {
        const double mean = facing_sum / facing_n;
        table.sigma_facing = std::max(
            std::sqrt(std::max(0.0, facing_ss / facing_n - mean * mean)), 1e-9);
    } else {
        table.sigma_facing = 1e-9;
    }

    table.residual_r_rms = resid_r_n ? std::sqrt(resid_r_ss / resid_r_n) : 0.0;
    table.residual_alpha_rms = resid_a_n ? std::sqrt(resid_a_ss / resid_a_n) : 0.0;
    if (table.residual_r_rms > cfg.residual_r_bound)
        throw FitDomainError("range fit residual " + std::to_string(table.residual_r_rms) +
                             " m exceeds bound near 0.3 m");
    return out;
}

RelativeMeasurement to_measurement(const TimingRecord& record,
                                   const CalibrationTable& table, double omega,
                                   const NeighborState& neighbor,
                                   const GeometryParams& geometry,
                                   double stale_revolutions) {
    if (!record.has_range())
        throw MeasurementError(MeasurementErrorKind::IncompleteTiming,
                               "pass lacks left or right receiver timing");
    const double period_ns = kTwoPi / omega * 1e9;
    if (record.close_time - neighbor.decode_time > stale_revolutions * period_ns)
        throw MeasurementError(MeasurementErrorKind::StaleMessage,
                               "neighbor position report too old");

    const double x = omega * (*record.t_right - *record.t_left) * 1e-9;
    const double arg = x / 2.0 + table.c0;
    if (x < table.x_min || x > table.x_max || arg <= 0.0 || arg >= kPi)
        throw MeasurementError(MeasurementErrorKind::OutOfDomain,
                               "side-crossing separation outside calibrated span");

    RelativeMeasurement m;
    m.neighbor_id = record.neighbor_id;
    m.origin = record.origin;
    m.range = table.r_eff / std::sin(arg);
    m.sigma_r = table.sigma_r_coeff * std::pow(m.range, table.sigma_r_exp);
    m.t_facing = (*record.t_left + *record.t_right) / 2.0;
    m.sigma_facing = table.sigma_facing;
    if (record.t_middle) {
        const double delta = omega * (*record.t_middle - m.t_facing) * 1e-9;
        if (delta >= table.delta_min && delta <= table.delta_max) {
            m.alpha = std::atan(table.alpha_k * std::sin(delta + table.c1));
            const double cos_a = std::cos(*m.alpha);
            m.sigma_alpha = table.sigma_alpha_coeff * cos_a * cos_a;
        }
    }
    const double z_offset = record.origin == Origin::Top ? geometry.z_offset_top
                                                         : geometry.z_offset_bottom;
    m.neighbor_pos = neighbor.position + Vec3{0.0, 0.0, z_offset};
    m.neighbor_sigma_xy = neighbor.sigma_xy;
    return m;
}

}  // namespace spinloc
