#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace zvlab {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
/// pure function of (key, counter), so any draw can be regenerated from its
/// coordinates without replaying a stream.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Block apply(Block ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Named sub-streams so unrelated consumers of the same (seed, path) never
/// collide.
enum class Stream : std::uint32_t {
    brownian = 0,
    sampling = 1,
    coupling = 2,
};

/// Normal variates addressed by (seed, path, step, stream). One Philox block
/// yields two standard normals via Box-Muller.
class CounterNormal {
public:
    explicit constexpr CounterNormal(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    std::array<double, 2> pair(std::uint64_t path, std::uint64_t step, Stream stream = Stream::brownian,
                               std::uint32_t lane = 0) const noexcept {
        const auto u = uniforms(path, step, stream, lane);
        const double r = std::sqrt(-2.0 * std::log(u[0]));
        const double a = 2.0 * std::numbers::pi * u[1];
        return {r * std::cos(a), r * std::sin(a)};
    }

    /// Two uniforms in the open interval (0, 1) with 53-bit resolution.
    std::array<double, 2> uniforms(std::uint64_t path, std::uint64_t step, Stream stream = Stream::brownian,
                                   std::uint32_t lane = 0) const noexcept {
        const Philox4x32::Block ctr{static_cast<std::uint32_t>(step),
                                    static_cast<std::uint32_t>(step >> 32) ^ (static_cast<std::uint32_t>(stream) << 24) ^ lane,
                                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
        const auto out = Philox4x32::apply(ctr, key_);
        return {to_unit(out[0], out[1]), to_unit(out[2], out[3])};
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
};

}  // namespace zvlab
