#pragma once

#include <cstdint>
#include <random>

namespace facstat {

// Named sub-streams derived from the single user seed. Each consumer draws from
// its own stream so adding randomness in one stage never shifts another.
enum class RngStream : std::uint32_t {
    Split = 1,
    ClusterInit = 2,
    Generator = 3,
    SoftmaxInit = 4,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

} // namespace facstat
