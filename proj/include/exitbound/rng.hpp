#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace exitbound {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
/// as easy as 1, 2, 3"). Maps a 128-bit counter and 64-bit key to 128
/// pseudo-random bits with no internal state.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMulA = 0xD2511F53u;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

    static constexpr Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += kWeylA;
            key[1] += kWeylB;
        }
        return ctr;
    }
};

/// SplitMix64 finalizer, used to derive independent keys from a base seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Uniform double in (0, 1] from the top 53 bits.
constexpr double to_unit_open_closed(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

/// Purpose tags separating the substreams of one replicate.
enum class StreamPurpose : std::uint64_t { Wiener = 1, WienerIndependent = 2, Bridge = 3 };

/// Random stream for one (base_seed, purpose, replicate) triple.
///
/// Draw k of the stream is block k/2 of Philox keyed by the derived seed,
/// so any replicate can be regenerated without touching the others.
class CounterStream {
public:
    CounterStream(std::uint64_t base_seed, StreamPurpose purpose, std::uint64_t replicate) noexcept {
        const std::uint64_t k = splitmix64(base_seed ^ splitmix64(static_cast<std::uint64_t>(purpose)));
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
        replicate_ = replicate;
    }

    /// 64 random bits.
    std::uint64_t next_u64() noexcept {
        if (have_ == 0) refill();
        --have_;
        return buffer_[1 - have_];
    }

    /// Uniform on (0, 1].
    double uniform() noexcept { return to_unit_open_closed(next_u64()); }

    /// Standard normal by Box-Muller; the second variate of each pair is kept
    /// for the next call.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Random bits at an arbitrary position, independent of the stream
    /// cursor: returns the same value as the position-th next_u64() call.
    [[nodiscard]] std::uint64_t at(std::uint64_t position) const noexcept {
        const auto out = Philox4x32::block(counter_for(position / 2), key_);
        const std::size_t half = static_cast<std::size_t>(position % 2) * 2;
        return static_cast<std::uint64_t>(out[half]) | (static_cast<std::uint64_t>(out[half + 1]) << 32);
    }

private:
    [[nodiscard]] Philox4x32::Counter counter_for(std::uint64_t blk) const noexcept {
        return {static_cast<std::uint32_t>(blk), static_cast<std::uint32_t>(blk >> 32),
                static_cast<std::uint32_t>(replicate_), static_cast<std::uint32_t>(replicate_ >> 32)};
    }

    void refill() noexcept {
        const auto out = Philox4x32::block(counter_for(block_++), key_);
        buffer_[0] = static_cast<std::uint64_t>(out[0]) | (static_cast<std::uint64_t>(out[1]) << 32);
        buffer_[1] = static_cast<std::uint64_t>(out[2]) | (static_cast<std::uint64_t>(out[3]) << 32);
        have_ = 2;
    }

    Philox4x32::Key key_{};
    std::uint64_t replicate_ = 0;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    std::size_t have_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Fills `out` with independent N(0, dt) draws.
inline void wiener_increments(CounterStream& stream, std::span<double> out, double dt) noexcept {
    const double scale = std::sqrt(dt);
    for (double& w : out) w = scale * stream.normal();
}

}  // namespace exitbound
