#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace hrmsm {

// Philox4x32-10 counter-based generator. Streams are keyed by a 64-bit seed
// plus a 64-bit stream id, so (replicate, subject) streams are independent
// and insensitive to evaluation order. The algorithm is fixed so fixtures
// reproduce across platforms.
struct Philox4x32 {
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
        constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
            std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
            std::array<std::uint32_t, 4> next;
            next[0] = static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0];
            next[1] = static_cast<std::uint32_t>(p1);
            next[2] = static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1];
            next[3] = static_cast<std::uint32_t>(p0);
            ctr = next;
            key[0] += W0;
            key[1] += W1;
        }
        return ctr;
    }
};

class Rng {
  public:
    Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    // Stream id for (replicate, subject) pairs; replicate and subject are
    // both well below 2^32 in practice.
    static std::uint64_t stream_id(std::uint64_t replicate, std::uint64_t subject) {
        return (replicate << 32) ^ (subject & 0xFFFFFFFFull);
    }

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t lo = next_u32();
        std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on (0, 1]; never returns 0 so log() is safe.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform() <= p; }

    double normal(double mean = 0.0, double sd = 1.0) {
        if (have_cached_) {
            have_cached_ = false;
            return mean + sd * cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return mean + sd * r * std::cos(theta);
    }

  private:
    void refill() {
        std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32),
            static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)};
        std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
        buf_ = Philox4x32::block(ctr, key);
        ++block_;
        pos_ = 0;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace hrmsm
