#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "spinloc/rng.hpp"
#include "spinloc/types.hpp"
#include "spinloc/vec3.hpp"

namespace spinloc {

inline constexpr Ns kSlotNs = 200;
inline constexpr Ns kSymbolNs = 1000;  // 4 slots + inter-symbol gap
inline constexpr int kPacketSymbols = 15;
inline constexpr int kPacketBits = 30;
// constant channel occupancy per train; the widest Bottom train ends exactly here
inline constexpr Ns kTrainSpanNs = kPacketSymbols * kSymbolNs;
inline constexpr Ns kTopOnTimePerPacketNs = kPacketSymbols * kSlotNs;
inline constexpr int kMaxMessageBytes = 32;  // 4-bit packet index, 2 bytes each

struct Packet {
    std::uint8_t source_id = 0;     // 6 bits
    std::uint8_t packet_index = 0;  // 4 bits
    std::array<std::uint8_t, 2> payload{};
    std::uint8_t msg_crc = 0;  // 4 bits
    Origin origin = Origin::Top;  // carried by the last-pulse width, not by bits

    bool operator==(const Packet&) const = default;
};

struct Pulse {
    Ns on = 0;
    Ns off = 0;
};

struct PulseTrain {
    Ns start_time = 0;  // slot-grid origin (first symbol's slot 0)
    std::vector<Pulse> edges;
};

enum class DecodeError { MalformedTiming, BadWidth, WrongBitCount };
const char* name(DecodeError e);

PulseTrain encode_packet(const Packet& p, Ns start_time = 0);
std::variant<Packet, DecodeError> decode_pulse_train(const PulseTrain& train,
                                                     Ns jitter_tol_ns = 50);

std::uint8_t crc4(const std::uint8_t* data, std::size_t n);
inline std::uint8_t crc4(const std::vector<std::uint8_t>& bytes) {
    return crc4(bytes.data(), bytes.size());
}

struct Message {
    std::uint8_t source_id = 0;
    std::vector<std::uint8_t> bytes;  // padded to 2 x packet count
};

enum class AssembleError { Incomplete, CrcMismatch };

std::vector<Packet> split_message(const Message& m, Origin origin = Origin::Top);
std::variant<Message, AssembleError> assemble_message(const std::vector<Packet>& packets,
                                                      int expected_packets);

// position payloads: signed 16-bit millimeters, little-endian, X Y Z
std::array<std::uint8_t, 6> encode_position(const Vec3& v);
Vec3 decode_position(const std::uint8_t* bytes);

// drone broadcast: position + sigma_xy in 0.1 mm units, 0xFFFF = no estimate
std::array<std::uint8_t, 8> encode_position_sigma(const Vec3& v, std::optional<double> sigma_xy);
std::pair<Vec3, std::optional<double>> decode_position_sigma(const std::uint8_t* bytes);

// ready-to-send packet sets for the two broadcast roles
std::vector<Packet> position_packets(std::uint8_t source_id, const Vec3& pos);
std::vector<Packet> position_sigma_packets(std::uint8_t source_id, const Vec3& pos,
                                           std::optional<double> sigma_xy);

struct AlohaScheduler {
    Rng rng;
    Ns interval_min = 50000;
    Ns interval_max = 100000;

    explicit AlohaScheduler(Rng r) : rng(r) {}

    Ns next_transmission_time(Ns now) {
        return now + rng.uniform_i64(interval_min, interval_max);
    }
};

}  // namespace spinloc
