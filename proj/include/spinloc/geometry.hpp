#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "spinloc/types.hpp"
#include "spinloc/vec3.hpp"

namespace spinloc {

struct SpinState {
    Vec3 center;
    double omega = 0.0;  // rad/s, counterclockwise about +z
    Ns phase_ref_time = 0;
    double phase_at_ref = 0.0;

    // t_ns may be fractional; result wrapped to [0, 2*pi)
    double phase_at(double t_ns) const {
        return wrap_2pi(phase_at_ref + omega * (t_ns - static_cast<double>(phase_ref_time)) / kNsPerSec);
    }
};

struct ReceiverSpec {
    ReceiverId id = ReceiverId::Middle;
    double plane_offset = 0.0;   // m along the body-frame right axis: +R Right, -R Left, 0 Middle
    double tilt_phi = 0.0;       // rad, nonzero only for Middle
    double half_width_h = 0.0;   // rad
    double half_width_v = 0.0;   // rad
    double azimuth_mount = 0.0;  // rad, identical for all three receivers
};

struct TransmitterSpec {
    Origin kind = Origin::Top;
    double z_offset = 0.0;  // m from the robot reference point
    double elev_min = 0.0;  // rad, coverage region
    double elev_max = 0.0;
};

struct RobotGeometry {
    std::array<ReceiverSpec, 3> receivers;
    std::array<TransmitterSpec, 2> transmitters;
    double body_radius = 0.056;

    const ReceiverSpec& rx(ReceiverId id) const {
        for (const auto& r : receivers)
            if (r.id == id) return r;
        throw std::logic_error("receiver id missing");
    }
    const TransmitterSpec& tx(Origin o) const {
        for (const auto& t : transmitters)
            if (t.kind == o) return t;
        throw std::logic_error("transmitter kind missing");
    }
};

struct GeometryParams {
    double receiver_offset = 0.04;  // perpendicular offset of the side FOV mid-planes from the spin axis
    double phi = deg_to_rad(25.0);
    double half_width_h = deg_to_rad(10.0);
    double half_width_v = deg_to_rad(50.0);
    double azimuth_mount = 0.0;
    double top_elev_min = deg_to_rad(-20.0);
    double top_elev_max = deg_to_rad(90.0);
    double bottom_elev_min = deg_to_rad(-90.0);
    double bottom_elev_max = deg_to_rad(20.0);
    double z_offset_top = 0.025;
    double z_offset_bottom = -0.025;
    double body_radius = 0.056;
};

RobotGeometry make_geometry(const GeometryParams& p = {});

struct DegenerateGeometry : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Exact times (fractional ns) within [w0_ns, w1_ns) when the receiver's mid-FOV
// surface contains tx_pos. Empty when the surface never reaches the transmitter.
std::vector<double> mid_plane_crossing_times(const SpinState& spin, const ReceiverSpec& rx,
                                             const Vec3& tx_pos, double w0_ns, double w1_ns);

// azimuth_jitter shifts the wedge boundary (penumbra noise injected by the channel)
bool in_fov(const SpinState& spin, const ReceiverSpec& rx, double t_ns, const Vec3& tx_pos,
            double azimuth_jitter = 0.0);

bool transmitter_visible(const TransmitterSpec& tx, const Vec3& tx_robot_pos, const Vec3& rx_pos,
                         double max_range);

}  // namespace spinloc
