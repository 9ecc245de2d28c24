#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spinloc/channel.hpp"
#include "spinloc/geometry.hpp"
#include "spinloc/protocol.hpp"
#include "spinloc/types.hpp"
#include "spinloc/vec3.hpp"

namespace spinloc {

class DomainError : public std::domain_error {
    using std::domain_error::domain_error;
};

// Timing extracted from one pass of the spin over a neighbor: the earliest
// decoded packet start per receiver, all from the same transmitter origin.
struct TimingRecord {
    int neighbor_id = 0;
    long pass_index = 0;  // per-neighbor counter
    Origin origin = Origin::Bottom;
    std::optional<double> t_left;    // ns
    std::optional<double> t_middle;  // ns
    std::optional<double> t_right;   // ns
    double close_time = 0.0;         // ns, when the pass was finalized

    bool has_range() const { return t_left && t_right; }
    bool complete() const { return has_range() && t_middle; }
};

// Groups decoded receptions into passes: receptions from one neighbor that
// are separated by less than close_gap belong to the same pass. When both
// transmitter origins were decoded in a pass, the one seen by more receivers
// wins (ties go to the bottom transmitter); times from the losing origin are
// discarded, never mixed.
class TimingAccumulator {
  public:
    explicit TimingAccumulator(double close_gap_ns) : close_gap_(close_gap_ns) {}

    void set_close_gap(double close_gap_ns) { close_gap_ = close_gap_ns; }
    void add(const ReceptionEvent& reception);
    void add(int neighbor_id, ReceiverId receiver, Origin origin, double t_start_ns);

    // Finalizes passes with no activity since now - close_gap and returns
    // them ordered by neighbor id. flush() closes everything.
    std::vector<TimingRecord> collect(double now_ns);
    std::vector<TimingRecord> flush();

  private:
    struct Pass {
        std::optional<double> first[2][3];  // [origin][receiver]
        double last_activity = 0.0;
    };
    TimingRecord finalize(int neighbor_id, const Pass& pass);

    std::map<int, Pass> open_;
    std::map<int, long> pass_counts_;
    std::vector<TimingRecord> ready_;
    double close_gap_;
};

// A neighbor's most recently decoded self-report.
struct NeighborState {
    Vec3 position;                       // m
    std::optional<double> sigma_xy;      // m
    double decode_time = 0.0;            // ns
};

// Reassembles multi-packet messages from decoded packets, deduplicating
// across receivers, and keeps the latest successfully decoded state per
// neighbor. Beacons report position (3 packets), drones append their
// horizontal uncertainty (4 packets).
class MessageAssembler {
  public:
    void add(const ReceptionEvent& reception, int expected_packets);
    std::optional<NeighborState> latest(int neighbor_id) const;
    // Drops partial messages with no new packet since t_ns.
    void expire_partials_before(double t_ns);

  private:
    struct Partial {
        std::map<int, Packet> by_index;
        double last_activity = 0.0;
    };
    std::map<std::pair<int, std::uint8_t>, Partial> partials_;
    std::map<int, NeighborState> states_;
};

// Closed-form range and elevation from crossing times, valid for an ideal
// sensor with mid-window timing:
//   range = R / sin(omega * (t_right - t_left) / 2)
//   alpha = atan(sin(omega * (t_middle - (t_left + t_right)/2)) * cot(phi))
struct IdealRelative {
    double range = 0.0;             // m
    std::optional<double> alpha;    // rad
};
IdealRelative ideal_relative(double t_left_ns, std::optional<double> t_middle_ns,
                             double t_right_ns, double omega,
                             double receiver_offset, double phi);

// First-order noise propagation for independent crossing-time errors of
// standard deviation sigma_t (seconds):
//   sigma_r     = range^2 * omega * sigma_t / (sqrt(2) * R)
//   sigma_alpha = cot(phi) * cos^2(alpha) * omega * sigma_t
//   sigma_theta = omega * sigma_t / sqrt(2)
struct Uncertainty {
    double sigma_r = 0.0;
    double sigma_alpha = 0.0;
    double sigma_theta = 0.0;
};
Uncertainty propagate_uncertainty(double range, double alpha, double omega,
                                  double receiver_offset, double phi,
                                  double sigma_t);

// Empirical maps from timing to geometry, produced by a calibration sweep:
//   range(x)     = r_eff / sin(x/2 + c0),          x = omega * (t_R - t_L)
//   alpha(delta) = atan(alpha_k * sin(delta + c1)), delta = omega * (t_M - t_facing)
//   sigma_r(r)   = sigma_r_coeff * r^sigma_r_exp
//   sigma_alpha  = sigma_alpha_coeff * cos^2(alpha)
struct CalibrationTable {
    int schema_version = 1;
    double r_eff = 0.04;
    double c0 = 0.0;
    double alpha_k = 2.1445069205095586;  // cot(25 deg)
    double c1 = 0.0;
    double sigma_r_coeff = 0.0602566;  // omega*sigma_t/(sqrt(2)*R) at defaults
    double sigma_r_exp = 2.0;
    double sigma_alpha_coeff = 0.0069938425;  // cot(phi)*omega*sigma_t
    double sigma_facing = 15.3e-6;  // s, std of (t_L+t_R)/2 about truth
    double x_min = 0.0, x_max = kPi;          // valid omega*dt_LR domain
    double delta_min = -kPi / 2, delta_max = kPi / 2;
    double residual_r_rms = 0.0;      // m, fit residual near 0.3 m
    double residual_alpha_rms = 0.0;  // rad

    std::string to_json() const;
    static CalibrationTable from_json(const std::string& text);

    // Analytic table for an ideal sensor (no reception delay or noise).
    static CalibrationTable ideal(double receiver_offset, double phi,
                                  double omega, double sigma_t);
};

class FitDomainError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CalibrateConfig {
    double r_min = 0.1, r_max = 0.5;
    int r_steps = 20;
    double alpha_min_deg = -40.0, alpha_max_deg = 40.0;
    int alpha_steps = 20;
    int revolutions_per_point = 50;
    double spin_hz = 25.0;
    std::uint64_t seed = 1;
    bool ideal_channel = false;
    GeometryParams geometry;
    ChannelConfig channel;
    double residual_r_bound = 0.005;  // m, acceptance bound near r = 0.3
};

struct CalibrationPointStats {
    double r_true = 0.0, alpha_true_deg = 0.0;
    int samples = 0;
    double r_mean = 0.0, r_std = 0.0;        // of fitted range
    double alpha_mean = 0.0, alpha_std = 0.0;  // rad, of fitted elevation
};

struct CalibrationOutcome {
    CalibrationTable table;
    std::vector<CalibrationPointStats> points;
};

// Sweeps a static beacon over an (r, alpha) grid around a spinning receiver,
// runs the full transmission pipeline (or exact crossing times when
// ideal_channel is set), and fits the calibration maps. Throws
// FitDomainError when the range fit misses by more than residual_r_bound
// near 0.3 m.
CalibrationOutcome calibrate(const CalibrateConfig& config);

enum class MeasurementErrorKind { StaleMessage, IncompleteTiming, OutOfDomain };
class MeasurementError : public std::runtime_error {
  public:
    MeasurementError(MeasurementErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    MeasurementErrorKind kind() const { return kind_; }

  private:
    MeasurementErrorKind kind_;
};

struct RelativeMeasurement {
    int neighbor_id = 0;
    double range = 0.0;              // m
    double sigma_r = 0.0;            // m
    std::optional<double> alpha;     // rad
    double sigma_alpha = 0.0;        // rad
    double t_facing = 0.0;           // ns
    double sigma_facing = 0.0;       // s
    Vec3 neighbor_pos;               // m, transmitter point
    std::optional<double> neighbor_sigma_xy;  // m
    Origin origin = Origin::Bottom;
};

// Applies the calibration to one timing record. The neighbor's reported
// position is shifted to the transmitter point of the record's origin.
// Throws MeasurementError: IncompleteTiming without both side receivers,
// OutOfDomain outside the calibrated timing span, StaleMessage when the
// neighbor's last report is older than stale_revolutions spin periods.
RelativeMeasurement to_measurement(const TimingRecord& record,
                                   const CalibrationTable& table, double omega,
                                   const NeighborState& neighbor,
                                   const GeometryParams& geometry,
                                   double stale_revolutions = 3.0);

}  // namespace spinloc
