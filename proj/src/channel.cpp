#include "spinloc/channel.hpp"

namespace spinloc {

const char* name(LossCause c) {
    switch (c) {
        case LossCause::Collision: return "collision";
        case LossCause::RandomLoss: return "random_loss";
        default: return "decode_failure";
    }
}

Rng& Channel::loss_stream(int robot, ReceiverId rx) {
    const auto key = std::make_pair(robot, static_cast<int>(rx));
    auto it = loss_streams_.find(key);
    if (it == loss_streams_.end())
        it = loss_streams_.emplace(key, Rng(seed_, 0xA105, robot, static_cast<int>(rx))).first;
    return it->second;
}

Rng& Channel::jitter_stream(int robot, ReceiverId rx) {
    const auto key = std::make_pair(robot, static_cast<int>(rx));
    auto it = jitter_streams_.find(key);
    if (it == jitter_streams_.end())
        it = jitter_streams_.emplace(key, Rng(seed_, 0x9177, robot, static_cast<int>(rx))).first;
    return it->second;
}

std::vector<Candidate> Channel::deliver(const OutgoingPacket& pkt,
                                        const std::vector<ReceiverRobot>& receivers,
                                        const std::function<bool(int, int)>& allowed) {
    std::vector<Candidate> out;
    std::shared_ptr<const PulseTrain> top_train, bottom_train;

    for (const auto& rx_robot : receivers) {
        if (rx_robot.robot_id == pkt.tx_robot) continue;
        if (allowed && !allowed(rx_robot.robot_id, pkt.tx_robot)) continue;
        const auto& geom = *rx_robot.geometry;

        for (const auto& rx : geom.receivers) {
            double jitter = 0.0;
            if (cfg_.crossing_jitter_sigma > 0.0)
                jitter = cfg_.crossing_jitter_sigma *
                         jitter_stream(rx_robot.robot_id, rx.id).gaussian();

            bool sees[2] = {false, false};
            for (const auto& tx_spec : geom.transmitters) {
                if (!transmitter_visible(tx_spec, pkt.tx_pos, rx_robot.spin.center, cfg_.max_range))
                    continue;
                const Vec3 tx_point = pkt.tx_pos + Vec3{0, 0, tx_spec.z_offset};
                if (!in_fov(rx_robot.spin, rx, static_cast<double>(pkt.t_start), tx_point, jitter))
                    continue;
                sees[tx_spec.kind == Origin::Bottom ? 1 : 0] = true;
            }
            if (!sees[0] && !sees[1]) continue;

            // both visible: the pulse union equals the Bottom train
            const Origin origin = sees[1] ? Origin::Bottom : Origin::Top;
            auto& train = origin == Origin::Bottom ? bottom_train : top_train;
            if (!train) {
                Packet p = pkt.packet;
                p.origin = origin;
                train = std::make_shared<const PulseTrain>(encode_packet(p, pkt.t_start));
            }

            Candidate c;
            c.rx_robot = rx_robot.robot_id;
            c.rx_id = rx.id;
            c.tx_robot = pkt.tx_robot;
            c.origin = origin;
            c.train = train;
            c.t_start = pkt.t_start;
            c.random_lost = loss_stream(rx_robot.robot_id, rx.id).bernoulli(cfg_.packet_loss_prob);
            out.push_back(std::move(c));
        }
    }
    return out;
}

namespace {

void resolve_cluster(const std::vector<Candidate>& cluster, std::size_t begin, std::size_t end,
                     Ns jitter_tol, ResolveResult& out) {
    const auto loss = [&](const Candidate& c, LossCause cause) {
        out.losses.push_back({c.rx_robot, c.rx_id, c.tx_robot, c.origin, c.t_start, cause});
    };
    if (end - begin > 1) {
        for (std::size_t i = begin; i < end; ++i) loss(cluster[i], LossCause::Collision);
        return;
    }
    const Candidate& c = cluster[begin];
    if (c.random_lost) {
        loss(c, LossCause::RandomLoss);
        return;
    }
    const auto decoded = decode_pulse_train(*c.train, jitter_tol);
    if (std::holds_alternative<DecodeError>(decoded)) {
        loss(c, LossCause::DecodeFailure);
        return;
    }
    out.decoded.push_back({c.rx_robot, c.rx_id, std::get<Packet>(decoded), c.t_start,
                           std::get<Packet>(decoded).origin});
}

}  // namespace

ResolveResult Channel::resolve_collisions(const std::vector<Candidate>& candidates,
                                          Ns decode_jitter_tol) {
    ResolveResult out;
    std::size_t begin = 0;
    Ns cluster_end = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (i == begin) {
            cluster_end = candidates[i].t_start + kTrainSpanNs;
            continue;
        }
        if (candidates[i].t_start < cluster_end) {
            cluster_end = std::max(cluster_end, candidates[i].t_start + kTrainSpanNs);
        } else {
            resolve_cluster(candidates, begin, i, decode_jitter_tol, out);
            begin = i;
            cluster_end = candidates[i].t_start + kTrainSpanNs;
        }
    }
    if (begin < candidates.size())
        resolve_cluster(candidates, begin, candidates.size(), decode_jitter_tol, out);
    return out;
}

void ReceiverInbox::push(Candidate c, Ns decode_jitter_tol, ResolveResult& out) {
    if (!cluster_.empty() && c.t_start >= cluster_end_) flush(out, decode_jitter_tol);
    cluster_end_ = cluster_.empty() ? c.t_start + kTrainSpanNs
                                    : std::max(cluster_end_, c.t_start + kTrainSpanNs);
    cluster_.push_back(std::move(c));
}

void ReceiverInbox::advance(Ns now, Ns decode_jitter_tol, ResolveResult& out) {
    if (!cluster_.empty() && now >= cluster_end_) flush(out, decode_jitter_tol);
}

void ReceiverInbox::flush(ResolveResult& out, Ns decode_jitter_tol) {
    if (cluster_.empty()) return;
    auto resolved = Channel::resolve_collisions(cluster_, decode_jitter_tol);
    out.decoded.insert(out.decoded.end(), resolved.decoded.begin(), resolved.decoded.end());
    out.losses.insert(out.losses.end(), resolved.losses.begin(), resolved.losses.end());
    cluster_.clear();
    cluster_end_ = 0;
}

}  // namespace spinloc
