#include "spinloc/geometry.hpp"

#include <cmath>

namespace spinloc {

RobotGeometry make_geometry(const GeometryParams& p) {
    RobotGeometry g;
    g.receivers[0] = {ReceiverId::Left, -p.receiver_offset, 0.0, p.half_width_h, p.half_width_v,
                      p.azimuth_mount};
    g.receivers[1] = {ReceiverId::Middle, 0.0, p.phi, p.half_width_h, p.half_width_v,
                      p.azimuth_mount};
    g.receivers[2] = {ReceiverId::Right, p.receiver_offset, 0.0, p.half_width_h, p.half_width_v,
                      p.azimuth_mount};
    g.transmitters[0] = {Origin::Top, p.z_offset_top, p.top_elev_min, p.top_elev_max};
    g.transmitters[1] = {Origin::Bottom, p.z_offset_bottom, p.bottom_elev_min, p.bottom_elev_max};
    g.body_radius = p.body_radius;
    return g;
}

namespace {

// The mid-FOV surface contains the transmitter when sin(theta - beta) = k,
// where theta is the facing azimuth, beta the transmitter azimuth, and
// k = plane_offset / r_h for the side receivers (parallel vertical planes)
// or tan(alpha) * tan(phi) for the tilted middle plane. Only the asin branch
// counts: half a turn later the receiver faces away from the transmitter.
struct CrossingGeometry {
    double r_h = 0.0;
    double beta = 0.0;
    double k = 0.0;
    bool reachable = false;
};

CrossingGeometry crossing_geometry(const SpinState& spin, const ReceiverSpec& rx,
                                   const Vec3& tx_pos) {
    const Vec3 d = tx_pos - spin.center;
    CrossingGeometry c;
    c.r_h = d.horizontal_norm();
    if (c.r_h < 1e-12) throw DegenerateGeometry("transmitter on the spin axis");
    c.beta = std::atan2(d.y, d.x);
    c.k = rx.id == ReceiverId::Middle ? (d.z / c.r_h) * std::tan(rx.tilt_phi)
                                      : rx.plane_offset / c.r_h;
    c.reachable = std::abs(c.k) <= 1.0;
    return c;
}

}  // namespace

std::vector<double> mid_plane_crossing_times(const SpinState& spin, const ReceiverSpec& rx,
                                             const Vec3& tx_pos, double w0_ns, double w1_ns) {
    if (spin.omega <= 0.0) throw DegenerateGeometry("omega must be positive");
    const auto c = crossing_geometry(spin, rx, tx_pos);
    std::vector<double> out;
    if (!c.reachable || w1_ns < w0_ns) return out;

    const double phase_cross = wrap_2pi(c.beta + std::asin(c.k) - rx.azimuth_mount);
    const double period_ns = kTwoPi / spin.omega * kNsPerSec;
    const double t_first = static_cast<double>(spin.phase_ref_time) +
                           wrap_2pi(phase_cross - spin.phase_at_ref) / spin.omega * kNsPerSec;
    double n = std::ceil((w0_ns - t_first) / period_ns - 1e-12);
    for (double t = t_first + n * period_ns; t < w1_ns - 1e-9; t += period_ns)  // [w0, w1)
        if (t >= w0_ns - 1e-9) out.push_back(t);
    return out;
}

bool in_fov(const SpinState& spin, const ReceiverSpec& rx, double t_ns, const Vec3& tx_pos,
            double azimuth_jitter) {
    const Vec3 d = tx_pos - spin.center;
    const double r_h = d.horizontal_norm();
    if (r_h < 1e-12) return false;
    const double beta = std::atan2(d.y, d.x);
    const double k = rx.id == ReceiverId::Middle ? (d.z / r_h) * std::tan(rx.tilt_phi)
                                                 : rx.plane_offset / r_h;
    if (std::abs(k) > 1.0) return false;

    const double theta = wrap_2pi(spin.phase_at(t_ns) + rx.azimuth_mount);
    if (std::cos(theta - beta) <= 0.0) return false;
    if (std::abs(wrap_pi(theta - beta - std::asin(k)) - azimuth_jitter) > rx.half_width_h)
        return false;

    const double norm = d.norm();
    const double elev_tilted =
        std::asin((d.z * std::cos(rx.tilt_phi) +
                   (d.x * std::sin(theta) - d.y * std::cos(theta)) * std::sin(rx.tilt_phi)) /
                  norm);
    return std::abs(elev_tilted) <= rx.half_width_v;
}

bool transmitter_visible(const TransmitterSpec& tx, const Vec3& tx_robot_pos, const Vec3& rx_pos,
                         double max_range) {
    const Vec3 tx_point = tx_robot_pos + Vec3{0.0, 0.0, tx.z_offset};
    const Vec3 d = rx_pos - tx_point;
    if (d.norm() > max_range) return false;
    const double elev = std::atan2(d.z, d.horizontal_norm());
    return elev >= tx.elev_min && elev <= tx.elev_max;
}

}  // namespace spinloc
