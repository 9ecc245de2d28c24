#include "spinloc/protocol.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace spinloc {

const char* name(DecodeError e) {
    switch (e) {
        case DecodeError::MalformedTiming: return "malformed_timing";
        case DecodeError::BadWidth: return "bad_width";
        default: return "wrong_bit_count";
    }
}

namespace {

// [source_id:6][packet_index:4][payload:16][msg_crc:4], MSB first
std::uint32_t pack_bits(const Packet& p) {
    return (static_cast<std::uint32_t>(p.source_id & 0x3F) << 24) |
           (static_cast<std::uint32_t>(p.packet_index & 0x0F) << 20) |
           (static_cast<std::uint32_t>(p.payload[0]) << 12) |
           (static_cast<std::uint32_t>(p.payload[1]) << 4) |
           (p.msg_crc & 0x0F);
}

Packet unpack_bits(std::uint32_t bits, Origin origin) {
    Packet p;
    p.source_id = (bits >> 24) & 0x3F;
    p.packet_index = (bits >> 20) & 0x0F;
    p.payload[0] = (bits >> 12) & 0xFF;
    p.payload[1] = (bits >> 4) & 0xFF;
    p.msg_crc = bits & 0x0F;
    p.origin = origin;
    return p;
}

}  // namespace

PulseTrain encode_packet(const Packet& p, Ns start_time) {
    const std::uint32_t bits = pack_bits(p);
    PulseTrain train;
    train.start_time = start_time;
    train.edges.reserve(kPacketSymbols);
    for (int s = 0; s < kPacketSymbols; ++s) {
        const int v = (bits >> (kPacketBits - 2 - 2 * s)) & 0x3;
        const Ns on = start_time + s * kSymbolNs + v * kSlotNs;
        const bool last = s == kPacketSymbols - 1;
        const Ns width = last && p.origin == Origin::Bottom ? 2 * kSlotNs : kSlotNs;
        train.edges.push_back({on, on + width});
    }
    return train;
}

std::variant<Packet, DecodeError> decode_pulse_train(const PulseTrain& train, Ns jitter_tol_ns) {
    if (train.edges.empty()) return DecodeError::WrongBitCount;

    int slot_of_symbol[kPacketSymbols];
    for (auto& s : slot_of_symbol) s = -1;
    int filled = 0;
    std::size_t last_idx = 0;
    for (std::size_t i = 0; i < train.edges.size(); ++i)
        if (train.edges[i].on > train.edges[last_idx].on) last_idx = i;

    for (std::size_t i = 0; i < train.edges.size(); ++i) {
        const Ns rel = train.edges[i].on - train.start_time;
        const Ns q = (rel + (rel >= 0 ? kSlotNs / 2 : -kSlotNs / 2)) / kSlotNs;
        if (std::abs(rel - q * kSlotNs) > jitter_tol_ns) return DecodeError::MalformedTiming;
        if (q < 0 || q >= kPacketSymbols * 5) return DecodeError::MalformedTiming;
        const int symbol = static_cast<int>(q / 5);
        const int slot = static_cast<int>(q % 5);
        if (slot == 4) return DecodeError::MalformedTiming;  // inter-symbol gap

        const Ns width = train.edges[i].off - train.edges[i].on;
        if (i == last_idx) {
            if (std::abs(width - kSlotNs) > jitter_tol_ns &&
                std::abs(width - 2 * kSlotNs) > jitter_tol_ns)
                return DecodeError::BadWidth;
        } else if (std::abs(width - kSlotNs) > jitter_tol_ns) {
            return DecodeError::BadWidth;
        }

        if (slot_of_symbol[symbol] >= 0) return DecodeError::WrongBitCount;
        slot_of_symbol[symbol] = slot;
        ++filled;
    }
    if (filled != kPacketSymbols) return DecodeError::WrongBitCount;

    std::uint32_t bits = 0;
    for (int s = 0; s < kPacketSymbols; ++s) bits = (bits << 2) | slot_of_symbol[s];
    const Ns last_width = train.edges[last_idx].off - train.edges[last_idx].on;
    const Origin origin =
        std::abs(last_width - 2 * kSlotNs) <= jitter_tol_ns ? Origin::Bottom : Origin::Top;
    return unpack_bits(bits, origin);
}

// CRC-4-ITU: poly x^4 + x + 1, init 0, reflected, xorout 0; check("123456789") = 0x7
std::uint8_t crc4(const std::uint8_t* data, std::size_t n) {
    std::uint8_t crc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t byte = data[i];
        for (int b = 0; b < 8; ++b) {
            const std::uint8_t fb = (crc ^ (byte >> b)) & 1;
            crc >>= 1;
            if (fb) crc ^= 0x0C;
        }
    }
    return crc & 0x0F;
}

std::vector<Packet> split_message(const Message& m, Origin origin) {
    if (m.bytes.empty() || m.bytes.size() > kMaxMessageBytes)
        throw std::length_error("message must be 1..32 bytes");
    std::vector<std::uint8_t> padded = m.bytes;
    if (padded.size() % 2) padded.push_back(0x00);
    const std::uint8_t crc = crc4(padded);

    std::vector<Packet> out;
    for (std::size_t i = 0; i < padded.size(); i += 2) {
        Packet p;
        p.source_id = m.source_id & 0x3F;
        p.packet_index = static_cast<std::uint8_t>(i / 2);
        p.payload = {padded[i], padded[i + 1]};
        p.msg_crc = crc;
        p.origin = origin;
        out.push_back(p);
    }
    return out;
}

std::variant<Message, AssembleError> assemble_message(const std::vector<Packet>& packets,
                                                      int expected_packets) {
    if (packets.empty() || expected_packets <= 0) return AssembleError::Incomplete;
    std::vector<const Packet*> by_index(expected_packets, nullptr);
    for (const auto& p : packets) {
        if (p.packet_index >= static_cast<int>(expected_packets)) continue;
        if (!by_index[p.packet_index]) by_index[p.packet_index] = &p;
    }
    Message m;
    for (const auto* p : by_index) {
        if (!p) return AssembleError::Incomplete;
        m.source_id = p->source_id;
        m.bytes.push_back(p->payload[0]);
        m.bytes.push_back(p->payload[1]);
    }
    if (crc4(m.bytes) != packets.front().msg_crc) return AssembleError::CrcMismatch;
    return m;
}

namespace {

std::int16_t to_mm(double meters) {
    const double mm = meters * 1000.0;
    const double rounded = mm >= 0 ? std::floor(mm + 0.5) : std::ceil(mm - 0.5);
    if (rounded < -32767.0 || rounded > 32767.0) throw std::out_of_range("coordinate exceeds 32.767 m");
    return static_cast<std::int16_t>(rounded);
}

void put_i16(std::uint8_t* out, std::int16_t v) {
    out[0] = static_cast<std::uint8_t>(v & 0xFF);
    out[1] = static_cast<std::uint8_t>((v >> 8) & 0xFF);
}

std::int16_t get_i16(const std::uint8_t* in) {
    return static_cast<std::int16_t>(in[0] | (in[1] << 8));
}

}  // namespace

std::array<std::uint8_t, 6> encode_position(const Vec3& v) {
    std::array<std::uint8_t, 6> out{};
    put_i16(&out[0], to_mm(v.x));
    put_i16(&out[2], to_mm(v.y));
    put_i16(&out[4], to_mm(v.z));
    return out;
}

Vec3 decode_position(const std::uint8_t* bytes) {
    return {get_i16(&bytes[0]) / 1000.0, get_i16(&bytes[2]) / 1000.0, get_i16(&bytes[4]) / 1000.0};
}

std::array<std::uint8_t, 8> encode_position_sigma(const Vec3& v, std::optional<double> sigma_xy) {
    std::array<std::uint8_t, 8> out{};
    const auto pos = encode_position(v);
    std::copy(pos.begin(), pos.end(), out.begin());
    std::uint16_t s = 0xFFFF;
    if (sigma_xy) {
        const double units = std::floor(*sigma_xy * 10000.0 + 0.5);  // 0.1 mm
        s = units >= 0xFFFE ? 0xFFFE : static_cast<std::uint16_t>(units < 0 ? 0 : units);
    }
    out[6] = static_cast<std::uint8_t>(s & 0xFF);
    out[7] = static_cast<std::uint8_t>(s >> 8);
    return out;
}

std::pair<Vec3, std::optional<double>> decode_position_sigma(const std::uint8_t* bytes) {
    const Vec3 v = decode_position(bytes);
    const std::uint16_t s = static_cast<std::uint16_t>(bytes[6] | (bytes[7] << 8));
    if (s == 0xFFFF) return {v, std::nullopt};
    return {v, s / 10000.0};
}

std::vector<Packet> position_packets(std::uint8_t source_id, const Vec3& pos) {
    const auto payload = encode_position(pos);
    Message m{source_id, {payload.begin(), payload.end()}};
    return split_message(m);
}

std::vector<Packet> position_sigma_packets(std::uint8_t source_id, const Vec3& pos,
                                           std::optional<double> sigma_xy) {
    const auto payload = encode_position_sigma(pos, sigma_xy);
    Message m{source_id, {payload.begin(), payload.end()}};
    return split_message(m);
}

}  // namespace spinloc
