#pragma once

#include <cstdint>

namespace spinloc {

using Ns = std::int64_t;

inline constexpr double kNsPerSec = 1e9;

inline constexpr double to_seconds(Ns t) { return static_cast<double>(t) / kNsPerSec; }
inline constexpr Ns to_ns(double seconds) { return static_cast<Ns>(seconds * kNsPerSec + (seconds >= 0 ? 0.5 : -0.5)); }

enum class Origin : std::uint8_t { Top, Bottom };
enum class ReceiverId : std::uint8_t { Left, Middle, Right };

inline const char* name(Origin o) { return o == Origin::Top ? "top" : "bottom"; }
inline const char* name(ReceiverId r) {
    switch (r) {
        case ReceiverId::Left: return "L";
        case ReceiverId::Middle: return "M";
        default: return "R";
    }
}

}  // namespace spinloc
