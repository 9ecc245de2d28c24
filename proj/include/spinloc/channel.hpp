#pragma once

#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "spinloc/geometry.hpp"
#include "spinloc/protocol.hpp"
#include "spinloc/rng.hpp"

namespace spinloc {

struct ChannelConfig {
    double max_range = 0.5;
    double packet_loss_prob = 0.02;
    double crossing_jitter_sigma = 0.0;  // rad, optional penumbra noise on the wedge boundary
    Ns decode_jitter_tol = 50;
};

struct TransmissionEvent {
    int robot_id = 0;
    Origin origin = Origin::Top;
    PulseTrain train;
    Vec3 tx_pos_at_start;
};

struct ReceptionEvent {
    int receiver_robot_id = 0;
    ReceiverId receiver_id = ReceiverId::Left;
    Packet packet;
    Ns t_start = 0;
    Origin from_origin = Origin::Top;
};

struct OutgoingPacket {
    int tx_robot = 0;
    Packet packet;  // origin field ignored; both origins transmit the same bits
    Ns t_start = 0;
    Vec3 tx_pos;
};

struct ReceiverRobot {
    int robot_id = 0;
    SpinState spin;  // spin.center is the robot position at the sample time
    const RobotGeometry* geometry = nullptr;
};

// a train that passed the geometric gates at one receiver; random-lost trains
// still occupy the channel and can collide with others
struct Candidate {
    int rx_robot = 0;
    ReceiverId rx_id = ReceiverId::Left;
    int tx_robot = 0;
    Origin origin = Origin::Top;
    std::shared_ptr<const PulseTrain> train;
    Ns t_start = 0;
    bool random_lost = false;
};

enum class LossCause { Collision, RandomLoss, DecodeFailure };
const char* name(LossCause c);

struct LossRecord {
    int rx_robot = 0;
    ReceiverId rx_id = ReceiverId::Left;
    int tx_robot = 0;
    Origin origin = Origin::Top;
    Ns t_start = 0;
    LossCause cause = LossCause::Collision;
};

struct ResolveResult {
    std::vector<ReceptionEvent> decoded;
    std::vector<LossRecord> losses;
};

class Channel {
  public:
    Channel(const ChannelConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {}

    const ChannelConfig& config() const { return cfg_; }

    // geometric + coverage + range gates for every receiver of every allowed robot,
    // with the Top/Bottom trains of one packet merged where both are visible
    // (their pulse union is exactly the Bottom train)
    std::vector<Candidate> deliver(const OutgoingPacket& pkt,
                                   const std::vector<ReceiverRobot>& receivers,
                                   const std::function<bool(int rx, int tx)>& allowed);

    // candidates must belong to one physical receiver, sorted by t_start;
    // any two trains whose occupancy spans overlap are both lost
    static ResolveResult resolve_collisions(const std::vector<Candidate>& candidates,
                                            Ns decode_jitter_tol);

  private:
    Rng& loss_stream(int robot, ReceiverId rx);
    Rng& jitter_stream(int robot, ReceiverId rx);

    ChannelConfig cfg_;
    std::uint64_t seed_;
    std::map<std::pair<int, int>, Rng> loss_streams_;
    std::map<std::pair<int, int>, Rng> jitter_streams_;
};

// incremental per-receiver collision clustering; candidates arrive in start order
class ReceiverInbox {
  public:
    void push(Candidate c, Ns decode_jitter_tol, ResolveResult& out);
    // resolves the pending cluster once the clock has passed its end, keeping
    // decode emission in global time order across receivers
    void advance(Ns now, Ns decode_jitter_tol, ResolveResult& out);
    void flush(ResolveResult& out, Ns decode_jitter_tol);

  private:
    std::vector<Candidate> cluster_;
    Ns cluster_end_ = 0;
};

}  // namespace spinloc
