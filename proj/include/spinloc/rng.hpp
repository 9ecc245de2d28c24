#pragma once

#include <cmath>
#include <cstdint>

#include "spinloc/vec3.hpp"

namespace spinloc {

// xoshiro256++ with splitmix64 seeding; fixed algorithms so streams are
// identical across platforms and standard-library versions.
class Rng {
  public:
    static std::uint64_t splitmix64(std::uint64_t& state) {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // stream derivation: hash the seed with up to three tag values
    explicit Rng(std::uint64_t seed, std::uint64_t tag0 = 0, std::uint64_t tag1 = 0,
                 std::uint64_t tag2 = 0) {
        std::uint64_t st = seed;
        st ^= splitmix64(tag0) + 0x1000003ULL * tag0;
        st ^= splitmix64(tag1) + 0x10000019ULL * tag1;
        st ^= splitmix64(tag2) + 0x100000259ULL * tag2;
        for (auto& w : s_) w = splitmix64(st);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1)
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // inclusive bounds
    std::int64_t uniform_i64(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next() % span);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(kTwoPi * u2);
        has_spare_ = true;
        return mag * std::cos(kTwoPi * u2);
    }

  private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t s_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace spinloc
